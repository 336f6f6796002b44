"""End-to-end comparison of all ten resource managers on a two-app mix.

App X is cache-sensitive and prefetch-hostile (uniform random accesses over
a working set slightly above half the LLC).  App Y is bandwidth- and
prefetch-sensitive (a high-intensity strided stream).  Coordinated
management should give X the cache, Y the bandwidth, and enable only Y's
prefetcher.  Takes roughly half a minute.
"""

from cbpsim import (RM_NAMES, SimConfig, SyntheticAppSpec, WorkloadMix,
                    run_experiment)

cfg = SimConfig(
    channel_bw_gbs=2.0,                # scarce bandwidth: contention matters
    reconfiguration_interval_ms=0.05,  # desk-scale controller cadence
    prefetch_sampling_period_ms=0.005,
    prefetch_interval_ms=0.05,
    atd_sample_period=1,
    mba_delay_ns=1.0,
    queue_delay_reset=True,
).validate()

x = SyntheticAppSpec(working_set_bytes=272 * 1024, reuse_skew=0.0,
                     mem_intensity=40, stride_fraction=0.0, seed=11)
y = SyntheticAppSpec(working_set_bytes=32 * 1024 * 1024, reuse_skew=0.0,
                     mem_intensity=60, stride_fraction=1.0, stride_bytes=64,
                     seed=22)
mix = WorkloadMix("tradeoff", ((0, x), (1, y)))

detailed, warmup = 600_000, 60_000
base = run_experiment(mix, "baseline", cfg, detailed_instructions=detailed,
                      warmup_instructions=warmup)
print(f"{'rm':>10s} {'ws':>7s} {'antt':>7s}   per-app IPC")
print(f"{'baseline':>10s} {base.weighted_speedup:7.3f} {base.antt:7.3f}   "
      f"{ {a: round(v, 3) for a, v in base.ipc_rm.items()} }")
for rm in RM_NAMES[1:]:
    rep = run_experiment(mix, rm, cfg, detailed_instructions=detailed,
                         warmup_instructions=warmup,
                         baseline_ipc=base.ipc_base)
    print(f"{rm:>10s} {rep.weighted_speedup:7.3f} {rep.antt:7.3f}   "
          f"{ {a: round(v, 3) for a, v in rep.ipc_rm.items()} }")
    if rm == "cbp":
        t, plan = rep.allocation_history[-1]
        print(f"{'':>10s} final plan: ways={plan.ways_per_app} "
              f"bw={ {a: round(float(v), 1) for a, v in plan.bw_share_per_app.items()} } "
              f"prefetch={plan.prefetch_on_per_app}")
