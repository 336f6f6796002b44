"""Resource allocation controllers and their coordinator.

Three policies: greedy utility-based cache way allocation, queueing-delay
proportional bandwidth allocation (exact rational arithmetic), and sampled
IPC prefetch throttling.  The coordinator sequences them: equal partitions
at time zero, an off/on prefetch sampling pair, then at every
reconfiguration interval the cache controller runs first, monitor counters
are halved, the bandwidth controller runs on the accumulated delays, and a
fresh sampling pair re-decides the prefetcher setting.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Sequence

from .config import SimConfig
from .memsys import PartitionState
from .monitor import IpcSample

# phases of the coordination state machine
PH_INITIAL = "initial-equal"
PH_SAMPLING_OFF = "sampling-pref-off"
PH_SAMPLING_ON = "sampling-pref-on"
PH_STEADY = "steady"


class AllocationError(ValueError):
    pass


# --------------------------------------------------------------------------
# cache ways


def equal_ways(apps: Sequence[int], total_ways: int, min_ways: int) -> dict:
    """Equal split, leftovers round-robin in app-id order."""
    apps = sorted(apps)
    if total_ways < len(apps) * min_ways:
        raise AllocationError(
            f"{total_ways} ways cannot give {len(apps)} apps {min_ways} each")
    base = total_ways // len(apps)
    plan = {a: base for a in apps}
    for i in range(total_ways - base * len(apps)):
        plan[apps[i % len(apps)]] += 1
    return plan


def allocate_cache(curves: Mapping[int, Sequence[float]], total_ways: int,
                   min_ways: int, grant_log: list | None = None) -> dict:
    """Greedy lookahead allocation from per-app miss curves.

    ``curves[a][w-1]`` is the predicted miss count of app ``a`` with ``w``
    ways.  Every app starts at ``min_ways``; repeatedly the (app, target)
    pair with the highest marginal utility per way,

        (misses(current) - misses(target)) / (target - current),

    receives its grant.  Ties go to the lowest app id and the smallest
    target.  When no strictly positive utility remains, leftover ways are
    handed out round-robin.  ``grant_log`` (if given) records
    ``(app, from_ways, to_ways, utility)`` per grant for auditing.
    """
    apps = sorted(curves)
    if not apps:
        raise AllocationError("no applications to allocate for")
    if min_ways < 1:
        raise AllocationError("min_ways must be >= 1")
    if total_ways < len(apps) * min_ways:
        raise AllocationError(
            f"{total_ways} ways cannot give {len(apps)} apps {min_ways} each")
    for a in apps:
        if len(curves[a]) < total_ways:
            raise AllocationError(f"miss curve of app {a} shorter than "
                                  f"{total_ways} entries")
    alloc = {a: min_ways for a in apps}
    remaining = total_ways - min_ways * len(apps)
    while remaining > 0:
        best_u = 0.0
        best = None  # (app, target)
        for a in apps:
            cur = alloc[a]
            m0 = curves[a][cur - 1]
            for target in range(cur + 1, cur + remaining + 1):
                u = (m0 - curves[a][target - 1]) / (target - cur)
                if u > best_u:
                    best_u = u
                    best = (a, target)
        if best is None:
            break  # no positive utility anywhere
        a, target = best
        if grant_log is not None:
            grant_log.append((a, alloc[a], target, best_u))
        remaining -= target - alloc[a]
        alloc[a] = target
    for i in range(remaining):
        alloc[apps[i % len(apps)]] += 1
    return alloc


def allocate_cache_cppf(curves: Mapping[int, Sequence[float]],
                        prefetch_friendly: Mapping[int, bool],
                        total_ways: int, min_ways: int) -> dict:
    """Pin prefetch-friendly apps at ``min_ways``, lookahead over the rest."""
    apps = sorted(curves)
    friendly = [a for a in apps if prefetch_friendly.get(a, False)]
    others = [a for a in apps if a not in friendly]
    if total_ways < len(apps) * min_ways:
        raise AllocationError(
            f"{total_ways} ways cannot give {len(apps)} apps {min_ways} each")
    plan = {a: min_ways for a in friendly}
    rest = total_ways - min_ways * len(friendly)
    if others:
        plan.update(allocate_cache({a: curves[a] for a in others},
                                   rest, min_ways))
    else:
        for i in range(rest):  # everyone pinned: leftovers round-robin
            plan[friendly[i % len(friendly)]] += 1
    return plan


# --------------------------------------------------------------------------
# bandwidth


def allocate_bandwidth(delays: Mapping[int, object], total_bw,
                       min_alloc) -> dict:
    """Split bandwidth proportionally to accumulated queueing delay.

    Every app receives ``min_alloc`` plus its share of the remainder,
    weighted by delay.  All arithmetic is exact (Fraction), so the shares
    sum to ``total_bw`` exactly.  With all delays zero the remainder is
    split equally.
    """
    apps = sorted(delays)
    if not apps:
        raise AllocationError("no applications to allocate for")
    total = Fraction(str(total_bw)) if isinstance(total_bw, float) else Fraction(total_bw)
    mina = Fraction(str(min_alloc)) if isinstance(min_alloc, float) else Fraction(min_alloc)
    if total < mina * len(apps):
        raise AllocationError(
            f"total bandwidth {float(total)} below {len(apps)} x "
            f"minimum {float(mina)}")
    remaining = total - mina * len(apps)
    dvals = {a: Fraction(delays[a]) for a in apps}
    if any(d < 0 for d in dvals.values()):
        raise AllocationError("negative queueing delay")
    total_delay = sum(dvals.values())
    plan = {a: mina for a in apps}
    if total_delay > 0:
        for a in apps:
            plan[a] += dvals[a] / total_delay * remaining
    else:
        for a in apps:
            plan[a] += remaining / len(apps)
    return plan


def equal_bandwidth(apps: Sequence[int], total_bw) -> dict:
    total = Fraction(str(total_bw)) if isinstance(total_bw, float) else Fraction(total_bw)
    return {a: total / len(apps) for a in sorted(apps)}


# --------------------------------------------------------------------------
# prefetch throttling


def decide_prefetch(samples: Mapping[int, tuple | None], threshold: float,
                    previous: Mapping[int, bool]) -> dict:
    """Enable prefetching where sampled IPC_on / IPC_off strictly exceeds
    the speedup threshold; apps with a missing sample keep their previous
    setting."""
    plan = {}
    for app in sorted(previous):
        pair = samples.get(app)
        if pair is None:
            plan[app] = previous[app]
            continue
        ipc_on, ipc_off = pair
        if ipc_off <= 0:
            raise AllocationError(f"app {app}: IPC without prefetching "
                                  f"must be positive")
        plan[app] = (ipc_on / ipc_off) > threshold
    return plan


# --------------------------------------------------------------------------
# coordination


@dataclass(frozen=True)
class RmPolicy:
    """Which controllers a resource manager runs.

    cache_mode: none | equal | ucp | cppf
    bw_mode:    none | equal | dynamic
    pref_mode:  off | dynamic | cppf_on
    """

    cache_mode: str
    bw_mode: str
    pref_mode: str

    @property
    def reconfigures(self) -> bool:
        return self.cache_mode in ("ucp", "cppf") or self.bw_mode == "dynamic"

    @property
    def samples_prefetch(self) -> bool:
        return self.pref_mode in ("dynamic", "cppf_on")


@dataclass(frozen=True)
class CoordinatorInputs:
    """Immutable snapshot the simulation loop hands to the coordinator."""

    miss_curves: dict          # app -> tuple of misses(w)
    delay_totals: dict         # app -> accumulated queue delay (ps)
    progress: dict             # app -> (instructions, clock_ps)


@dataclass(frozen=True)
class CoordinatorState:
    phase: str
    next_wake_ps: int | None
    next_reconfig_ps: int | None
    next_sampling_ps: int | None
    window_start: dict | None      # progress snapshot at window start
    off_samples: dict | None       # app -> IpcSample from the off window
    pref_plan: dict                # currently decided prefetch settings
    friendly: dict                 # cppf classification
    cache_plan: dict | None
    bw_plan: dict | None
    action_log: tuple = ()


def init_coordinator(policy: RmPolicy, cfg: SimConfig,
                     apps: Sequence[int]) -> CoordinatorState:
    next_reconfig = cfg.reconfiguration_interval_ps if policy.reconfigures else None
    next_sampling = 0 if policy.samples_prefetch else None
    wakes = [t for t in (0 if policy.cache_mode != "none"
                         or policy.bw_mode != "none"
                         or policy.samples_prefetch else None,
                         next_reconfig, next_sampling) if t is not None]
    return CoordinatorState(
        phase=PH_INITIAL,
        next_wake_ps=min(wakes) if wakes else None,
        next_reconfig_ps=next_reconfig,
        next_sampling_ps=next_sampling,
        window_start=None,
        off_samples=None,
        pref_plan={a: cfg.prefetch_default_on for a in apps},
        friendly={},
        cache_plan=None,
        bw_plan=None,
    )


def _collect_samples(window_start: dict, progress: dict, cycle_ps: int,
                     prefetch_on: bool) -> dict:
    """Per-app IpcSample over a window; None where no cycles elapsed."""
    samples = {}
    for app, (i0, c0) in window_start.items():
        i1, c1 = progress[app]
        cycles = (c1 - c0) / cycle_ps
        if cycles <= 0:
            samples[app] = None
        else:
            samples[app] = IpcSample(app, i1 - i0, cycles, prefetch_on)
    return samples


def _next_wake(reconfig, sampling):
    times = [t for t in (reconfig, sampling) if t is not None]
    return min(times) if times else None


def coordinator_step(policy: RmPolicy, cfg: SimConfig, apps: Sequence[int],
                     state: CoordinatorState, inputs: CoordinatorInputs,
                     now_ps: int):
    """Advance the coordination state machine at one wake instant.

    Returns ``(actions, new_state)``.  Actions are executed by the
    simulation loop in order; kinds are ``("partition", PartitionState)``,
    ``("prefetch", {app: bool})``, ``("decay", None)`` and
    ``("reset_delays", None)``.  The function itself mutates nothing.
    """
    apps = sorted(apps)
    actions: list = []
    log: list = []
    phase = state.phase
    next_reconfig = state.next_reconfig_ps
    next_sampling = state.next_sampling_ps
    window_start = state.window_start
    off_samples = state.off_samples
    pref_plan = dict(state.pref_plan)
    friendly = dict(state.friendly)
    cache_plan = state.cache_plan
    bw_plan = state.bw_plan

    def partition_action():
        actions.append(("partition", PartitionState(
            ways_per_app=dict(cache_plan) if cache_plan is not None else None,
            bw_share_per_app=dict(bw_plan) if bw_plan is not None else None,
            prefetch_on_per_app=dict(pref_plan))))

    if phase == PH_INITIAL:
        # resources start equally partitioned; no measurements exist yet
        if policy.cache_mode in ("equal", "ucp", "cppf"):
            cache_plan = equal_ways(apps, cfg.llc_ways, cfg.min_ways)
            log.append("cache_equal")
        if policy.bw_mode in ("equal", "dynamic"):
            bw_plan = equal_bandwidth(apps, cfg.total_bw_gbs)
            log.append("bw_equal")
        partition_action()
        if policy.samples_prefetch:
            phase = PH_SAMPLING_OFF
            window_start = dict(inputs.progress)
            actions.append(("prefetch", {a: False for a in apps}))
            log.append("sampling_off_start")
            next_sampling = cfg.prefetch_interval_ps
            wake = now_ps + cfg.prefetch_sampling_period_ps
            if next_reconfig is not None:
                wake = min(wake, next_reconfig)
        else:
            # pref_mode off: the static config setting stays in force
            phase = PH_STEADY
            wake = _next_wake(next_reconfig, next_sampling)
        return actions, replace(
            state, phase=phase, next_wake_ps=wake,
            next_reconfig_ps=next_reconfig, next_sampling_ps=next_sampling,
            window_start=window_start, off_samples=off_samples,
            pref_plan=pref_plan, friendly=friendly,
            cache_plan=cache_plan, bw_plan=bw_plan,
            action_log=state.action_log + tuple(log))

    # reconfiguration has priority over an in-flight sampling pair; the
    # samples would be stale under the new allocation anyway
    if next_reconfig is not None and now_ps >= next_reconfig:
        if policy.cache_mode == "ucp":
            cache_plan = allocate_cache(inputs.miss_curves, cfg.llc_ways,
                                        cfg.min_ways)
            log.append("cache_alloc")
        elif policy.cache_mode == "cppf":
            cache_plan = allocate_cache_cppf(inputs.miss_curves, friendly,
                                             cfg.llc_ways, cfg.min_ways)
            log.append("cache_alloc_cppf")
        if policy.cache_mode in ("ucp", "cppf"):
            actions.append(("decay", None))
            log.append("decay")
        if policy.bw_mode == "dynamic":
            bw_plan = allocate_bandwidth(inputs.delay_totals,
                                         cfg.total_bw_gbs, cfg.min_bw_gbs)
            log.append("bw_alloc")
            if cfg.queue_delay_reset:
                actions.append(("reset_delays", None))
        partition_action()
        next_reconfig = next_reconfig + cfg.reconfiguration_interval_ps
        if policy.samples_prefetch:
            phase = PH_SAMPLING_OFF
            window_start = dict(inputs.progress)
            off_samples = None
            actions.append(("prefetch", {a: False for a in apps}))
            log.append("sampling_off_start")
            next_sampling = now_ps + cfg.prefetch_interval_ps
            wake = min(now_ps + cfg.prefetch_sampling_period_ps,
                       next_reconfig)
        else:
            phase = PH_STEADY
            wake = _next_wake(next_reconfig, next_sampling)
        return actions, replace(
            state, phase=phase, next_wake_ps=wake,
            next_reconfig_ps=next_reconfig, next_sampling_ps=next_sampling,
            window_start=window_start, off_samples=off_samples,
            pref_plan=pref_plan, friendly=friendly,
            cache_plan=cache_plan, bw_plan=bw_plan,
            action_log=state.action_log + tuple(log))

    if phase == PH_SAMPLING_OFF:
        off_samples = _collect_samples(window_start, inputs.progress,
                                       cfg.cycle_ps, False)
        phase = PH_SAMPLING_ON
        window_start = dict(inputs.progress)
        actions.append(("prefetch", {a: True for a in apps}))
        log.append("sampling_on_start")
        wake = now_ps + cfg.prefetch_sampling_period_ps
        if next_reconfig is not None:
            wake = min(wake, next_reconfig)
        return actions, replace(
            state, phase=phase, next_wake_ps=wake,
            next_reconfig_ps=next_reconfig, next_sampling_ps=next_sampling,
            window_start=window_start, off_samples=off_samples,
            pref_plan=pref_plan, friendly=friendly,
            cache_plan=cache_plan, bw_plan=bw_plan,
            action_log=state.action_log + tuple(log))

    if phase == PH_SAMPLING_ON:
        on_samples = _collect_samples(window_start, inputs.progress,
                                      cfg.cycle_ps, True)
        pairs = {}
        for app in apps:
            on = on_samples.get(app)
            off = (off_samples or {}).get(app)
            pairs[app] = (on.ipc, off.ipc) if on and off else None
        decision = decide_prefetch(pairs, cfg.speedup_threshold, pref_plan)
        if policy.pref_mode == "cppf_on":
            friendly = decision
            pref_plan = {a: True for a in apps}  # always on outside sampling
            log.append("cppf_classify")
        else:
            pref_plan = decision
            log.append("pref_decide")
        actions.append(("prefetch", dict(pref_plan)))
        phase = PH_STEADY
        window_start = None
        off_samples = None
        if next_sampling is not None and next_sampling <= now_ps:
            next_sampling = now_ps + cfg.prefetch_interval_ps
        wake = _next_wake(next_reconfig, next_sampling)
        return actions, replace(
            state, phase=phase, next_wake_ps=wake,
            next_reconfig_ps=next_reconfig, next_sampling_ps=next_sampling,
            window_start=window_start, off_samples=off_samples,
            pref_plan=pref_plan, friendly=friendly,
            cache_plan=cache_plan, bw_plan=bw_plan,
            action_log=state.action_log + tuple(log))

    # steady wake: a standalone sampling tick (no reconfiguration due)
    if policy.samples_prefetch and next_sampling is not None \
            and now_ps >= next_sampling:
        phase = PH_SAMPLING_OFF
        window_start = dict(inputs.progress)
        off_samples = None
        actions.append(("prefetch", {a: False for a in apps}))
        log.append("sampling_off_start")
        next_sampling = next_sampling + cfg.prefetch_interval_ps
        wake = now_ps + cfg.prefetch_sampling_period_ps
        if next_reconfig is not None:
            wake = min(wake, next_reconfig)
    else:
        wake = _next_wake(next_reconfig, next_sampling)
    return actions, replace(
        state, phase=phase, next_wake_ps=wake,
        next_reconfig_ps=next_reconfig, next_sampling_ps=next_sampling,
        window_start=window_start, off_samples=off_samples,
        pref_plan=pref_plan, friendly=friendly,
        cache_plan=cache_plan, bw_plan=bw_plan,
        action_log=state.action_log + tuple(log))
