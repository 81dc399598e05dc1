"""Walk through the latency decomposition on a hand-built trace.

A span's duration splits into time spent waiting on children (the union
of their intervals, clipped to the parent) and the self segment left
over. The self segment is what the utility measures score, because it
is the part of the latency the span itself is responsible for.
"""
from spanbandit import SpanIdentity, SpanRecord, build_trace, decompose

WEB = SpanIdentity("frontend", "render")
AUTH = SpanIdentity("auth", "check")
DB = SpanIdentity("db", "query")


def main():
    records = [
        SpanRecord("demo", "a", None, WEB, 0, 1000, {}),
        SpanRecord("demo", "b", "a", AUTH, 100, 200, {}),
        # Two overlapping queries: their union, not their sum, is what
        # the parent waits for.
        SpanRecord("demo", "c", "a", DB, 350, 300, {"shard": "s1"}),
        SpanRecord("demo", "d", "a", DB, 500, 400, {"shard": "s2"}),
    ]
    trace = build_trace(records)
    print(f"trace {trace.trace_id}: {len(trace)} spans, "
          f"end to end {trace.end_to_end_latency_us()} us")
    print(f"{'span':<6} {'identity':<18} {'duration':>9} {'waiting':>9} {'self':>7}")
    for row in decompose(trace):
        print(f"{row.span_id:<6} {row.identity.label():<18} "
              f"{row.duration_us:>9} {row.child_waiting_us:>9} {row.self_segment_us:>7}")
    total_self = sum(r.self_segment_us for r in decompose(trace))
    print(f"\nsum of self segments: {total_self} us, more than the 1000 us "
          f"end to end because the two db queries overlap in time")
    print("(per span, duration == waiting + self always holds)")


if __name__ == "__main__":
    main()
