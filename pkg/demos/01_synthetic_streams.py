"""Tour of the synthetic stream generator.

Each application is a stream of (gap, address, kind) records.  The knobs
shape how sensitive the app is to cache capacity (working set + reuse
skew), bandwidth (memory intensity) and prefetching (stride fraction).
"""

from collections import Counter

from cbpsim import SyntheticAppSpec, generate_synthetic

# A small uniform-random app: reuse_skew 0 keeps the whole working set hot.
uniform = SyntheticAppSpec(working_set_bytes=64 * 1024, reuse_skew=0.0,
                           mem_intensity=200, seed=1)
lines = set()
records = 0
for rec in generate_synthetic(uniform, 200_000):
    lines.add(rec.addr // 64)
    records += 1
print(f"uniform app: {records} accesses touched {len(lines)} distinct lines "
      f"(working set holds {64 * 1024 // 64})")

# Raising reuse_skew concentrates accesses on a shrinking hot pool.
for skew in (0.0, 0.5, 0.9):
    spec = SyntheticAppSpec(working_set_bytes=256 * 1024, reuse_skew=skew,
                            mem_intensity=200, seed=2)
    counts = Counter(rec.addr // 64 for rec in generate_synthetic(spec, 300_000))
    top = sum(c for _, c in counts.most_common(len(counts) // 10 or 1))
    share = top / sum(counts.values())
    print(f"reuse_skew={skew}: hottest 10% of touched lines absorb "
          f"{share:.0%} of accesses")

# A pure strided stream walks pages without ever crossing one mid-run.
stream = SyntheticAppSpec(working_set_bytes=1 << 20, stride_fraction=1.0,
                          stride_bytes=64, page_bytes=4096,
                          mem_intensity=500, seed=3)
records = list(generate_synthetic(stream, 50_000))
crossings = sum(1 for a, b in zip(records, records[1:])
                if b.addr - a.addr == 64 and a.addr // 4096 != b.addr // 4096)
print(f"strided app: {len(records)} accesses, "
      f"{crossings} in-run page crossings (must be 0)")

# mem_intensity fixes the average number of accesses per 1000 instructions.
busy = SyntheticAppSpec(working_set_bytes=1 << 20, mem_intensity=50, seed=4)
recs = list(generate_synthetic(busy, 400_000))
instr = sum(r.instructions for r in recs)
print(f"mem_intensity=50: measured {1000 * len(recs) / instr:.1f} "
      f"accesses per 1000 instructions")
