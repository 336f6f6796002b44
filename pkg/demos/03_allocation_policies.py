"""The three allocation policies on hand-crafted inputs."""

from fractions import Fraction

from cbpsim import allocate_bandwidth, allocate_cache, decide_prefetch

# --- cache ways: greedy utility-per-way allocation -----------------------
# App 0 benefits massively from its first extra ways then flattens out;
# app 1 improves linearly the whole time.
curves = {
    0: [1000, 400, 150, 60, 50, 48, 47, 46, 46, 46, 46, 46, 46, 46, 46, 46],
    1: [800, 750, 700, 650, 600, 550, 500, 450, 400, 350, 300, 250, 200,
        150, 100, 50],
}
grants = []
plan = allocate_cache(curves, total_ways=16, min_ways=2, grant_log=grants)
print("cache plan:", plan)
for app, frm, to, utility in grants:
    print(f"  grant: app {app} {frm}->{to} ways "
          f"(marginal utility {utility:.1f} misses/way)")

# --- bandwidth: proportional to accumulated queueing delay ---------------
delays = {0: 3_000, 1: 1_000, 2: 0, 3: 0}
bw = allocate_bandwidth(delays, total_bw=16, min_alloc=1)
print("bandwidth plan (GB/s):", {a: float(v) for a, v in bw.items()})
assert sum(bw.values()) == Fraction(16)  # exact conservation

# --- prefetch throttling: sampled speedup against a threshold ------------
samples = {
    0: (1.30, 1.00),   # clear win: enable
    1: (1.05, 1.00),   # exactly at the threshold: strict compare, disable
    2: (0.85, 1.00),   # prefetching hurts: disable
    3: None,           # no sample this round: keep the previous setting
}
plan = decide_prefetch(samples, threshold=1.05,
                       previous={0: False, 1: False, 2: True, 3: True})
print("prefetch plan:", plan)
