"""Experiment driver: resource-manager configurations, metrics, CSV output.

Ten resource managers are supported.  ``baseline`` shares everything and
never prefetches; the others toggle cache partitioning (equal or dynamic),
bandwidth partitioning (equal or dynamic) and prefetch throttling in every
combination studied, including ``cppf`` (cache partitioning that pins
prefetch-friendly apps at the minimum allocation, prefetching always on)
and ``cbp`` (all three controllers coordinated).

Performance is reported as weighted speedup (mean per-app IPC ratio versus
the baseline run) and ANTT (mean per-app CPI ratio, lower is better).
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import SimConfig
from .controllers import RmPolicy
from .engine import SimEngine
from .traces import ClassifySettings, SyntheticAppSpec, WorkloadMix

_RM_TABLE = {
    # name:       (cache_mode, bw_mode,   pref_mode)
    "baseline":   ("none",  "none",    "off"),
    "equal_off":  ("equal", "equal",   "off"),
    "only_cache": ("ucp",   "none",    "off"),
    "only_bw":    ("none",  "dynamic", "off"),
    "only_pref":  ("none",  "none",    "dynamic"),
    "bw_pref":    ("none",  "dynamic", "dynamic"),
    "bw_cache":   ("ucp",   "dynamic", "off"),
    "cache_pref": ("ucp",   "none",    "dynamic"),
    "cppf":       ("cppf",  "none",    "cppf_on"),
    "cbp":        ("ucp",   "dynamic", "dynamic"),
}

RM_NAMES = tuple(_RM_TABLE)


@dataclass(frozen=True)
class RmConfig:
    name: str
    policy: RmPolicy

    @staticmethod
    def by_name(name: str) -> "RmConfig":
        try:
            cache, bw, pref = _RM_TABLE[name]
        except KeyError:
            raise ValueError(f"unknown resource manager {name!r}; "
                             f"choose from {', '.join(RM_NAMES)}")
        return RmConfig(name, RmPolicy(cache, bw, pref))

    @staticmethod
    def all() -> list["RmConfig"]:
        return [RmConfig.by_name(n) for n in RM_NAMES]


@dataclass
class RunReport:
    mix_name: str
    rm_name: str
    seed: int
    ipc_rm: dict
    ipc_base: dict
    weighted_speedup: float
    antt: float
    timeseries: list
    allocation_history: list
    repartition_events: list
    prefetch_stats: dict
    queue_delay_ps: dict
    warmup_instructions: int
    detailed_instructions: int
    demand_accesses: int
    prefetch_fills: int
    violations: list


def weighted_speedup(ipc_rm: dict, ipc_base: dict) -> float:
    """Arithmetic mean of per-app IPC ratios against the baseline."""
    if set(ipc_rm) != set(ipc_base):
        raise ValueError("weighted_speedup: app sets differ")
    if not ipc_rm:
        raise ValueError("weighted_speedup: empty app set")
    if any(v <= 0 for v in ipc_base.values()):
        raise ValueError("weighted_speedup: baseline IPC must be positive")
    return sum(ipc_rm[a] / ipc_base[a] for a in ipc_rm) / len(ipc_rm)


def antt(cpi_rm: dict, cpi_base: dict) -> float:
    """Average normalized turnaround time: mean per-app CPI ratio."""
    if set(cpi_rm) != set(cpi_base):
        raise ValueError("antt: app sets differ")
    if not cpi_rm:
        raise ValueError("antt: empty app set")
    if any(v <= 0 for v in cpi_base.values()):
        raise ValueError("antt: baseline CPI must be positive")
    return sum(cpi_rm[a] / cpi_base[a] for a in cpi_rm) / len(cpi_rm)


def run_experiment(mix: WorkloadMix, rm: RmConfig | str, cfg: SimConfig,
                   *, detailed_instructions: int | None = None,
                   warmup_instructions: int | None = None, seed: int = 0,
                   baseline_ipc: dict | None = None,
                   validate: bool = False) -> RunReport:
    """Run one (mix, resource manager) experiment.

    The report normalizes against a baseline run of the same mix, config
    and seed; pass ``baseline_ipc`` to reuse one already computed.
    """
    if isinstance(rm, str):
        rm = RmConfig.by_name(rm)
    detailed = (cfg.detailed_instructions if detailed_instructions is None
                else detailed_instructions)
    warmup = (cfg.warmup_instructions if warmup_instructions is None
              else warmup_instructions)
    engine = SimEngine(cfg, mix, rm.policy, seed=seed, validate=validate)
    result = engine.run(detailed, warmup)
    if rm.name == "baseline":
        base_ipc = dict(result.ipc)
    elif baseline_ipc is not None:
        base_ipc = dict(baseline_ipc)
    else:
        base = SimEngine(cfg, mix, RmConfig.by_name("baseline").policy,
                         seed=seed, validate=validate)
        base_ipc = base.run(detailed, warmup).ipc
    ws = weighted_speedup(result.ipc, base_ipc)
    fairness = antt({a: 1.0 / v for a, v in result.ipc.items()},
                    {a: 1.0 / v for a, v in base_ipc.items()})
    return RunReport(
        mix_name=mix.name,
        rm_name=rm.name,
        seed=seed,
        ipc_rm=dict(result.ipc),
        ipc_base=base_ipc,
        weighted_speedup=ws,
        antt=fairness,
        timeseries=result.timeseries,
        allocation_history=result.allocation_history,
        repartition_events=result.repartition_events,
        prefetch_stats={a: s.as_dict() for a, s in result.prefetch_stats.items()},
        queue_delay_ps=result.queue_delay_ps,
        warmup_instructions=warmup,
        detailed_instructions=detailed,
        demand_accesses=result.demand_accesses,
        prefetch_fills=result.prefetch_fills,
        violations=result.violations,
    )


def _sweep_one(args):
    mix, rm_name, cfg, detailed, warmup, seed, baseline_ipc = args
    return run_experiment(mix, rm_name, cfg,
                          detailed_instructions=detailed,
                          warmup_instructions=warmup, seed=seed,
                          baseline_ipc=baseline_ipc)


def sweep(mixes, rm_names, cfg: SimConfig, *,
          detailed_instructions: int | None = None,
          warmup_instructions: int | None = None, seed: int = 0,
          jobs: int = 1) -> list[RunReport]:
    """Run a mix x resource-manager matrix; reports come back in a stable
    (mix order, rm order) sequence regardless of worker scheduling."""
    mixes = list(mixes)
    rm_names = list(rm_names)
    baselines = {}
    for mix in mixes:
        baselines[mix.name] = run_experiment(
            mix, "baseline", cfg, detailed_instructions=detailed_instructions,
            warmup_instructions=warmup_instructions, seed=seed)
    tasks = [(mix, rm_name, cfg, detailed_instructions, warmup_instructions,
              seed, baselines[mix.name].ipc_base)
             for mix in mixes for rm_name in rm_names if rm_name != "baseline"]
    if jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    by_key = {(r.mix_name, r.rm_name): r for r in results}
    for mix in mixes:
        by_key[(mix.name, "baseline")] = baselines[mix.name]
    return [by_key[(mix.name, rm_name)]
            for mix in mixes for rm_name in rm_names
            if (mix.name, rm_name) in by_key]


# --------------------------------------------------------------------------
# result files


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def emit_results(reports, out_dir: str | Path) -> list[Path]:
    """Write summary.csv plus one time-series CSV per run; returns paths.

    Output is deterministic: stable column order, rows in input order, and
    byte-identical files for identical runs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    summary = out_dir / "summary.csv"
    with summary.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mix", "rm", "weighted_speedup", "antt"])
        for rep in reports:
            writer.writerow([rep.mix_name, rep.rm_name,
                             _fmt(rep.weighted_speedup), _fmt(rep.antt)])
    paths.append(summary)
    for rep in reports:
        name = f"timeseries_{rep.mix_name}_{rep.rm_name}.csv"
        ts_path = out_dir / name
        with ts_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["interval", "app", "ways", "bw_share",
                             "prefetch_on", "ipc"])
            for interval, app, ways, bw, pref_on, ipc in rep.timeseries:
                writer.writerow([interval, app, _fmt(ways), _fmt(bw),
                                 pref_on, _fmt(ipc)])
        paths.append(ts_path)
    return paths


# --------------------------------------------------------------------------
# single-app measurement environment for sensitivity classification


class DeskSimEnv:
    """Runs one app alone under a given cache size / bandwidth / prefetch
    setting and reports its IPC; plugs into classify_sensitivity."""

    def __init__(self, cfg: SimConfig, instructions: int = 200_000,
                 warmup: int = 50_000, seed: int = 0):
        self.cfg = cfg
        self.instructions = instructions
        self.warmup = warmup
        self.seed = seed

    def measure_ipc(self, spec: SyntheticAppSpec, llc_bytes: int,
                    bw_gbs: float, prefetch_on: bool) -> float:
        cfg_kwargs = dict(self.cfg.__dict__)
        cfg_kwargs.update(
            llc_size_bytes=llc_bytes,
            channels=1,
            channel_bw_gbs=bw_gbs,
            prefetch_default_on=prefetch_on,
        )
        cfg = SimConfig(**cfg_kwargs).validate()
        mix = WorkloadMix("probe", ((0, spec),))
        policy = RmPolicy("none", "none", "off")  # fixed settings only
        engine = SimEngine(cfg, mix, policy, seed=self.seed)
        result = engine.run(self.instructions, self.warmup)
        return result.ipc[0]


def classify_mix(mix: WorkloadMix, cfg: SimConfig,
                 settings: ClassifySettings = ClassifySettings(),
                 instructions: int = 200_000, warmup: int = 50_000,
                 seed: int = 0) -> dict:
    """Sensitivity classification for every synthetic app of a mix."""
    from .traces import classify_sensitivity
    env = DeskSimEnv(cfg, instructions, warmup, seed)
    out = {}
    for app, source in mix.apps:
        if not isinstance(source, SyntheticAppSpec):
            raise ValueError(f"app {app}: only synthetic apps can be "
                             f"classified (needs a generator spec)")
        out[app] = classify_sensitivity(source, env, settings)
    return out
