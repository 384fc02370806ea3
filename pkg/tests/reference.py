"""Brute-force reference cache automaton, written independently of the
package implementation: plain lists, explicit rescans, no shared code.
Used as the oracle for hit/miss sequences."""


def reference_trace(items, policy, capacity, scores=None):
    """Replay item ids; returns the per-event hit(True)/miss(False) sequence.

    policy: "lru" | "lfu" | "mfscore". scores maps item -> float for mfscore;
    missing items score -inf.
    """
    cached = []  # entries: [item, last_used, freq]
    trace = []
    clock = 0

    def score_of(item):
        if scores is None:
            return float("-inf")
        return scores.get(item, float("-inf"))

    for item in items:
        clock += 1
        hit = False
        for entry in cached:
            if entry[0] == item:
                entry[1] = clock
                entry[2] += 1
                hit = True
                break
        trace.append(hit)
        if hit:
            continue
        if len(cached) < capacity:
            cached.append([item, clock, 1])
            continue
        if policy == "lru":
            victim = min(cached, key=lambda e: e[1])
        elif policy == "lfu":
            victim = min(cached, key=lambda e: (e[2], e[1]))
        elif policy == "mfscore":
            victim = min(cached, key=lambda e: (score_of(e[0]), e[1]))
        else:
            raise ValueError(policy)
        if policy == "mfscore" and not score_of(item) > score_of(victim[0]):
            continue  # not admitted
        cached.remove(victim)
        cached.append([item, clock, 1])
    return trace
