"""Allocation policies and the coordination state machine."""

import itertools
import random
from fractions import Fraction

import pytest

from cbpsim import (AllocationError, CoordinatorInputs, RmPolicy,
                    allocate_bandwidth, allocate_cache, allocate_cache_cppf,
                    coordinator_step, decide_prefetch, equal_bandwidth,
                    equal_ways, init_coordinator)

from conftest import desk_config


def best_split(curves, total_ways, min_ways):
    """Exhaustive oracle: minimum total misses over all full allocations."""
    apps = sorted(curves)
    best = None
    ranges = [range(min_ways, total_ways + 1) for _ in apps]
    for combo in itertools.product(*ranges):
        if sum(combo) != total_ways:
            continue
        total = sum(curves[a][w - 1] for a, w in zip(apps, combo))
        if best is None or total < best:
            best = total
    return best


def plan_misses(curves, plan):
    return sum(curves[a][w - 1] for a, w in plan.items())


def convex_curve(rng, ways, start_scale=1000):
    drops = sorted((rng.randint(0, start_scale) for _ in range(ways - 1)),
                   reverse=True)
    level = rng.randint(ways * start_scale // 2, ways * start_scale)
    curve = [level]
    for d in drops:
        level -= d
        curve.append(level)
    return curve


def monotone_curve(rng, ways, start_scale=1000):
    curve = [rng.randint(0, start_scale) for _ in range(ways)]
    curve.sort(reverse=True)
    return curve


# ---- cache lookahead ----

def test_flat_curves_equal_split():
    flat = [100] * 8
    plan = allocate_cache({0: flat, 1: list(flat)}, 8, 1)
    assert plan == {0: 4, 1: 4}


def test_single_app_gets_everything():
    plan = allocate_cache({7: [50, 40, 30, 20, 10, 5, 2, 1]}, 8, 1)
    assert plan == {7: 8}


def test_documented_example_matches_bruteforce():
    curves = {0: [10, 2, 2, 2, 2, 2, 2, 2],
              1: [10, 9, 8, 7, 6, 5, 4, 3]}
    plan = allocate_cache(curves, 8, 1)
    assert sum(plan.values()) == 8
    assert plan_misses(curves, plan) == best_split(curves, 8, 1)


def test_min_ways_respected():
    curves = {0: [100, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1],
              1: [100] * 16}
    plan = allocate_cache(curves, 16, 4)
    assert plan[1] >= 4 and plan[0] >= 4
    assert sum(plan.values()) == 16


def test_infeasible_rejected():
    with pytest.raises(AllocationError):
        allocate_cache({0: [1] * 8, 1: [1] * 8}, 7, 4)
    with pytest.raises(AllocationError):
        allocate_cache({}, 8, 1)


def test_greedy_optimal_on_convex_curves():
    rng = random.Random(1000)
    for trial in range(150):
        n_apps = rng.choice((2, 3))
        ways = rng.choice((8, 12, 16))
        min_ways = rng.choice((1, 4))
        if ways < n_apps * min_ways:
            continue
        curves = {a: convex_curve(rng, ways) for a in range(n_apps)}
        plan = allocate_cache(curves, ways, min_ways)
        assert sum(plan.values()) == ways
        assert plan_misses(curves, plan) == best_split(curves, ways, min_ways)


def test_arbitrary_monotone_full_distribution_and_argmax():
    rng = random.Random(2000)
    for trial in range(100):
        n_apps = rng.choice((2, 3, 4))
        ways = 16
        min_ways = rng.choice((1, 4))
        curves = {a: monotone_curve(rng, ways) for a in range(n_apps)}
        log = []
        plan = allocate_cache(curves, ways, min_ways, grant_log=log)
        assert sum(plan.values()) == ways
        assert all(w >= min_ways for w in plan.values())
        # replay: every grant must have carried the maximal per-way utility
        alloc = {a: min_ways for a in curves}
        remaining = ways - min_ways * len(curves)
        for app, frm, to, utility in log:
            best_u = 0.0
            for a in sorted(curves):
                cur = alloc[a]
                for target in range(cur + 1, cur + remaining + 1):
                    u = (curves[a][cur - 1] - curves[a][target - 1]) / (target - cur)
                    best_u = max(best_u, u)
            assert alloc[app] == frm
            assert utility == pytest.approx(best_u)
            alloc[app] = to
            remaining -= to - frm


# ---- cppf variant ----

def test_cppf_no_friendly_equals_plain():
    rng = random.Random(7)
    curves = {a: convex_curve(rng, 16) for a in range(3)}
    friendly = {a: False for a in curves}
    assert (allocate_cache_cppf(curves, friendly, 16, 4)
            == allocate_cache(curves, 16, 4))


def test_cppf_all_friendly_min_plus_round_robin():
    curves = {a: [100] * 16 for a in range(3)}
    friendly = {a: True for a in curves}
    plan = allocate_cache_cppf(curves, friendly, 16, 4)
    assert sorted(plan.values()) == [5, 5, 6]
    assert plan[0] == 6  # round-robin starts at the lowest app id


def test_cppf_one_friendly_pinned():
    curves = {0: [100, 90, 80, 70, 60, 50, 40, 30],
              1: [100, 10, 10, 10, 10, 10, 10, 10]}
    plan = allocate_cache_cppf(curves, {1: True, 0: False}, 8, 2)
    assert plan[1] == 2
    assert plan[0] == 6


# ---- bandwidth ----

def test_documented_bandwidth_example():
    plan = allocate_bandwidth({0: 3, 1: 1, 2: 0, 3: 0}, 16, 1)
    assert plan == {0: Fraction(10), 1: Fraction(4),
                    2: Fraction(1), 3: Fraction(1)}


def test_equal_delays_equal_shares():
    plan = allocate_bandwidth({a: 5 for a in range(4)}, 16, 1)
    assert all(v == Fraction(4) for v in plan.values())


def test_zero_delays_fallback_equal():
    plan = allocate_bandwidth({a: 0 for a in range(4)}, 16, 1)
    assert all(v == Fraction(4) for v in plan.values())


def test_bandwidth_exact_conservation():
    rng = random.Random(31)
    for _ in range(200):
        n = rng.randint(1, 8)
        delays = {a: rng.randint(0, 10**12) for a in range(n)}
        total = rng.randint(n, 128)
        plan = allocate_bandwidth(delays, total, 1)
        assert sum(plan.values()) == Fraction(total)
        assert all(v >= 1 for v in plan.values())


def test_bandwidth_infeasible_rejected():
    with pytest.raises(AllocationError):
        allocate_bandwidth({0: 1, 1: 1}, 1.5, 1.0)
    with pytest.raises(AllocationError):
        allocate_bandwidth({0: -5, 1: 1}, 16, 1)


def test_bandwidth_permutation_invariance():
    delays = {0: 7, 1: 19, 2: 2}
    plan = allocate_bandwidth(delays, 24, 1)
    renamed = allocate_bandwidth({2: 7, 0: 19, 1: 2}, 24, 1)
    assert renamed[2] == plan[0]
    assert renamed[0] == plan[1]
    assert renamed[1] == plan[2]


def test_bandwidth_scale_invariance():
    delays = {0: 3, 1: 11, 2: 5}
    plan = allocate_bandwidth(delays, 32, 1)
    for c in (2, 1000, Fraction(1, 7)):
        scaled = allocate_bandwidth({a: d * c for a, d in delays.items()}, 32, 1)
        assert scaled == plan


# ---- prefetch decision ----

def test_decision_table():
    prev = {0: False}
    on = decide_prefetch({0: (1.10, 1.00)}, 1.05, prev)
    assert on == {0: True}
    boundary = decide_prefetch({0: (1.05, 1.00)}, 1.05, prev)
    assert boundary == {0: False}  # strict inequality at the threshold
    slow = decide_prefetch({0: (0.90, 1.00)}, 1.05, prev)
    assert slow == {0: False}


def test_missing_sample_keeps_previous():
    prev = {0: True, 1: False}
    plan = decide_prefetch({0: None, 1: (2.0, 1.0)}, 1.05, prev)
    assert plan == {0: True, 1: True}


def test_zero_off_ipc_rejected():
    with pytest.raises(AllocationError):
        decide_prefetch({0: (1.0, 0.0)}, 1.05, {0: False})


def test_decision_monotone_in_speedup():
    rng = random.Random(44)
    for _ in range(500):
        off = rng.uniform(0.05, 4.0)
        on = rng.uniform(0.05, 4.0)
        first = decide_prefetch({0: (on, off)}, 1.05, {0: False})[0]
        higher = decide_prefetch({0: (on + rng.uniform(0, 2), off)},
                                 1.05, {0: False})[0]
        assert higher or not first  # raising IPC_on never disables


# ---- equal splits ----

def test_equal_ways_leftovers():
    assert equal_ways([0, 1, 2], 16, 4) == {0: 6, 1: 5, 2: 5}
    with pytest.raises(AllocationError):
        equal_ways([0, 1, 2], 8, 4)


def test_equal_bandwidth_exact():
    plan = equal_bandwidth([0, 1, 2], 32.0)
    assert sum(plan.values()) == Fraction(32)


# ---- coordinator ----

def make_inputs(apps, curves=None, delays=None, progress=None):
    return CoordinatorInputs(
        miss_curves=curves or {a: tuple([0] * 16) for a in apps},
        delay_totals=delays or {a: 0 for a in apps},
        progress=progress or {a: (0, 0) for a in apps},
    )


def test_initial_equal_partition():
    cfg = desk_config()
    apps = [0, 1, 2, 3]
    policy = RmPolicy("ucp", "dynamic", "dynamic")
    state = init_coordinator(policy, cfg, apps)
    assert state.next_wake_ps == 0
    actions, state = coordinator_step(policy, cfg, apps, state,
                                      make_inputs(apps), 0)
    kinds = [k for k, _ in actions]
    assert kinds[0] == "partition"
    part = actions[0][1]
    assert part.ways_per_app == {a: 4 for a in apps}
    assert part.bw_share_per_app == {a: Fraction(8) for a in apps}
    assert state.phase == "sampling-pref-off"
    assert ("prefetch", {a: False for a in apps}) in actions


def test_baseline_coordinator_inert():
    cfg = desk_config()
    policy = RmPolicy("none", "none", "off")
    state = init_coordinator(policy, cfg, [0, 1])
    assert state.next_wake_ps is None  # never wakes, never emits


def test_equal_off_single_shot():
    cfg = desk_config()
    apps = [0, 1]
    policy = RmPolicy("equal", "equal", "off")
    state = init_coordinator(policy, cfg, apps)
    actions, state = coordinator_step(policy, cfg, apps, state,
                                      make_inputs(apps), 0)
    assert [k for k, _ in actions] == ["partition"]
    assert state.phase == "steady"
    assert state.next_wake_ps is None


def test_reconfiguration_ordering_cache_then_bw_then_sampling():
    cfg = desk_config()
    apps = [0, 1]
    policy = RmPolicy("ucp", "dynamic", "dynamic")
    state = init_coordinator(policy, cfg, apps)
    _, state = coordinator_step(policy, cfg, apps, state, make_inputs(apps), 0)
    curves = {0: tuple(100 - 6 * w for w in range(1, 17)),
              1: tuple([50] * 16)}
    inputs = make_inputs(apps, curves=curves, delays={0: 10, 1: 30},
                         progress={a: (1000, 10**9) for a in apps})
    reconfig_t = cfg.reconfiguration_interval_ps
    actions, state = coordinator_step(policy, cfg, apps, state, inputs,
                                      reconfig_t)
    log = state.action_log
    i_cache = log.index("cache_alloc")
    i_decay = log.index("decay")
    i_bw = log.index("bw_alloc")
    i_samp = len(log) - 1 - log[::-1].index("sampling_off_start")
    assert i_cache < i_decay < i_bw < i_samp
    part = [p for k, p in actions if k == "partition"][0]
    assert sum(part.ways_per_app.values()) == cfg.llc_ways
    assert sum(part.bw_share_per_app.values()) == Fraction(32)
    assert part.bw_share_per_app[1] > part.bw_share_per_app[0]


def test_sampling_pair_decides_prefetch():
    cfg = desk_config()
    apps = [0, 1]
    policy = RmPolicy("none", "none", "dynamic")
    state = init_coordinator(policy, cfg, apps)
    actions, state = coordinator_step(policy, cfg, apps, state,
                                      make_inputs(apps), 0)
    assert state.phase == "sampling-pref-off"
    p = cfg.prefetch_sampling_period_ps
    cyc = cfg.cycle_ps
    # off window: both apps retire 1000 instructions in 4000 cycles
    prog1 = {a: (1000, 4000 * cyc) for a in apps}
    actions, state = coordinator_step(policy, cfg, apps, state,
                                      make_inputs(apps, progress=prog1), p)
    assert state.phase == "sampling-pref-on"
    assert ("prefetch", {0: True, 1: True}) in actions
    # on window: app 0 doubles its IPC, app 1 stays flat
    prog2 = {0: (3000, 8000 * cyc), 1: (2000, 8000 * cyc)}
    actions, state = coordinator_step(policy, cfg, apps, state,
                                      make_inputs(apps, progress=prog2), 2 * p)
    assert state.phase == "steady"
    assert ("prefetch", {0: True, 1: False}) in actions


def test_coordinator_deterministic():
    cfg = desk_config()
    apps = [0, 1]
    policy = RmPolicy("ucp", "dynamic", "dynamic")

    def run_sequence():
        state = init_coordinator(policy, cfg, apps)
        out = []
        inputs = make_inputs(apps,
                             curves={0: tuple(90 - 5 * w for w in range(16)),
                                     1: tuple([10] * 16)},
                             delays={0: 5, 1: 9},
                             progress={a: (500, 10**8) for a in apps})
        now = 0
        for _ in range(6):
            actions, state = coordinator_step(policy, cfg, apps, state,
                                              inputs, now)
            out.append((now, actions))
            if state.next_wake_ps is None:
                break
            now = state.next_wake_ps
        return out

    assert run_sequence() == run_sequence()
