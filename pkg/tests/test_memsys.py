"""Hierarchy behaviour, partition enforcement and channel timing."""

from fractions import Fraction

import pytest

from cbpsim import (HIT_L1, HIT_L2, HIT_MEM, AddressError, Machine,
                    PartitionError, PartitionState, SimConfig)


def tiny_machine(**overrides):
    kwargs = dict(
        l1_size_bytes=1024, l1_ways=2,        # 8 sets
        l2_size_bytes=4096, l2_ways=2,        # 32 sets
        llc_size_bytes=16 * 1024, llc_ways=4,  # 64 sets
        channels=1, channel_bw_gbs=16.0, mem_latency_ns=80.0,
        mba_delay_ns=5.0, min_ways=1, min_bw_gbs=1.0,
    )
    kwargs.update(overrides)
    cfg = SimConfig(**kwargs).validate()
    return cfg, Machine(cfg, (0, 1))


def equal_partition(cfg, machine, ways=None, bw=None):
    apps = machine.apps
    total = Fraction(str(cfg.total_bw_gbs))
    state = PartitionState(
        ways_per_app=ways,
        bw_share_per_app=bw,
        prefetch_on_per_app={a: False for a in apps},
    )
    return machine.apply_partition(state)


# ---- demand path ----

def test_repeat_hits_l1():
    cfg, m = tiny_machine()
    level0, lat0, _ = m.access(0, 0x1000, "L", 0)
    level1, lat1, _ = m.access(0, 0x1000, "L", 10_000_000)
    assert level0 == HIT_MEM
    assert level1 == HIT_L1
    assert lat1 == cfg.l1_latency_cycles * cfg.cycle_ps


def test_levels_in_order():
    cfg, m = tiny_machine()
    m.access(0, 0x2000, "L", 0)
    # push 0x2000 out of L1 by filling its L1 set (same L1 set every
    # 8 lines * 64 B = 0x200), while keeping it in L2
    m.access(0, 0x2000 + 0x200, "L", 1000)
    m.access(0, 0x2000 + 0x400, "L", 2000)
    level, _, _ = m.access(0, 0x2000, "L", 3000)
    assert level == HIT_L2


def test_address_out_of_range():
    cfg, m = tiny_machine()
    with pytest.raises(AddressError):
        m.access(0, 1 << 60, "L", 0)


def test_capacity_streaming_misses():
    # app confined to 1 way streams over 4x the per-way lines: all misses
    cfg, m = tiny_machine()
    equal_partition(cfg, m, ways={0: 1, 1: 3})
    n_sets = cfg.llc_config().n_sets
    lines = [i * 64 for i in range(4 * n_sets)]
    t = 0
    for addr in lines:
        m.access(0, addr, "L", t)
        t += 1_000_000
    misses = 0
    for addr in lines:  # second sweep: still beyond 1-way capacity
        level, _, _ = m.access(0, addr, "L", t)
        misses += level == HIT_MEM
        t += 1_000_000
    assert misses == len(lines)


def test_llc_eviction_back_invalidates():
    # single-way LLC set: a conflicting fill evicts the line everywhere
    cfg, m = tiny_machine()
    equal_partition(cfg, m, ways={0: 1, 1: 3})
    n_sets = cfg.llc_config().n_sets
    base = 0x40 * 3  # arbitrary set
    m.access(0, base, "L", 0)
    assert m.check_inclusion() == []
    m.access(0, base + n_sets * 64, "L", 1_000_000)  # same LLC set
    level, _, _ = m.access(0, base, "L", 2_000_000)
    assert level == HIT_MEM  # L1/L2 copies were invalidated with the line


def test_inclusion_invariant_random_traffic():
    import random
    rng = random.Random(7)
    cfg, m = tiny_machine()
    equal_partition(cfg, m, ways={0: 2, 1: 2})
    t = 0
    for _ in range(5000):
        app = rng.randint(0, 1)
        addr = rng.randrange(0, 64 * 1024, 4)
        m.access(app, addr, "L", t)
        t += 100_000
    assert m.check_inclusion() == []
    assert m.check_way_containment() == []


# ---- memory service ----

def test_idle_channel_full_share_is_base_latency():
    cfg, m = tiny_machine()
    total = Fraction(str(cfg.total_bw_gbs))
    equal_partition(cfg, m, bw={0: total - 1, 1: Fraction(1)})
    # app 0 nearly owns the bandwidth: injected ~ 5 * (16/15 - 1) < 1 ns
    timing = m.memory_service(0, 0, 0)
    assert timing.queue_ps == 0
    assert timing.base_ns == 80.0
    # with the full share the injected delay is exactly zero
    m2cfg, m2 = tiny_machine()
    single = Machine(m2cfg, (0,))
    single.apply_partition(PartitionState(None, {0: Fraction(16)}, {0: False}))
    t = single.memory_service(0, 0, 0)
    assert (t.base_ps, t.queue_ps, t.injected_ps) == (80_000, 0, 0)
    assert t.total_ns == 80.0


def test_fifo_second_request_waits_one_slot():
    cfg, m = tiny_machine()
    t0 = m.memory_service(0, 0, 0)
    t1 = m.memory_service(1, 0, 0)  # same instant, same channel
    service_ps = round(1000.0 * cfg.line_bytes / cfg.channel_bw_gbs)
    assert t0.queue_ps == 0
    assert t1.queue_ps == service_ps


def test_injected_delay_formula():
    cfg, m = tiny_machine()
    total = Fraction(str(cfg.total_bw_gbs))  # 16 GB/s
    equal_partition(cfg, m, bw={0: total / 2, 1: total / 2})
    t_half = m.memory_service(0, 0, 0)
    assert t_half.injected_ns == pytest.approx(5.0)  # K*(16/8-1)
    equal_partition(cfg, m, bw={0: total / 4, 1: 3 * total / 4})
    t_quarter = m.memory_service(0, 10**9, 0)
    assert t_quarter.injected_ns == pytest.approx(15.0)  # K*(16/4-1)


def test_timing_decomposition():
    cfg, m = tiny_machine()
    equal_partition(cfg, m, bw={0: Fraction(4), 1: Fraction(12)})
    for i in range(50):
        t = m.memory_service(0, i * 1000, i * 64)
        assert t.total_ps == t.base_ps + t.queue_ps + t.injected_ps


def test_queue_stats_accumulate():
    cfg, m = tiny_machine()
    m.memory_service(0, 0, 0)
    m.memory_service(0, 0, 0)
    assert m.queue_stats.requests[0] == 2
    assert m.queue_stats.queue_delay_ps[0] > 0


# ---- partition application ----

def test_apply_identity_no_invalidations():
    cfg, m = tiny_machine()
    equal_partition(cfg, m, ways={0: 2, 1: 2})
    for i in range(200):
        m.access(0, i * 64, "L", i * 1_000_000)
    counts = equal_partition(cfg, m, ways={0: 2, 1: 2})
    assert counts == {0: 0, 1: 0}


def test_shrink_invalidates_resident_lines():
    cfg, m = tiny_machine(llc_size_bytes=16 * 1024, llc_ways=8)
    equal_partition(cfg, m, ways={0: 6, 1: 2})
    n_sets = cfg.llc_config().n_sets  # 32
    t = 0
    for i in range(6 * n_sets):  # fill all six ways of app 0
        m.access(0, i * 64, "L", t)
        t += 1_000_000
    ways_of_0 = sorted(m.llc.app_ways[0])
    lost = ways_of_0[3:]  # shrinking 6 -> 3 releases the highest three
    expected = m.lines_in_ways(lost)
    assert expected > 0
    counts = equal_partition(cfg, m, ways={0: 3, 1: 5})
    assert counts[0] == expected
    assert m.check_way_containment() == []


def test_grow_only_change_invalidates_nothing():
    cfg, m = tiny_machine(llc_size_bytes=16 * 1024, llc_ways=8)
    equal_partition(cfg, m, ways={0: 3, 1: 3})
    t = 0
    for i in range(400):
        m.access(0, i * 64, "L", t)
        m.access(1, i * 64, "L", t + 500_000)
        t += 1_000_000
    counts = equal_partition(cfg, m, ways={0: 4, 1: 4})
    assert counts == {0: 0, 1: 0}


def test_invalid_partition_rejected_state_kept():
    cfg, m = tiny_machine()
    equal_partition(cfg, m, ways={0: 2, 1: 2})
    before_owner = list(m.llc.owner)
    with pytest.raises(PartitionError):
        equal_partition(cfg, m, ways={0: 4, 1: 4})  # sums beyond 4 ways
    with pytest.raises(PartitionError):
        equal_partition(cfg, m, ways={0: 0, 1: 4})  # below min_ways
    with pytest.raises(PartitionError):
        equal_partition(cfg, m, bw={0: Fraction(1), 1: Fraction(1)})  # sum
    assert list(m.llc.owner) == before_owner


def test_bandwidth_conservation_check():
    cfg, m = tiny_machine()
    equal_partition(cfg, m, bw={0: Fraction(8), 1: Fraction(8)})
    assert m.check_conservation() == []


def test_unpartitioned_llc_shared_lru():
    cfg, m = tiny_machine()
    # no partition: app 1's streaming evicts app 0's only line
    m.access(0, 0x0, "L", 0)
    n_sets = cfg.llc_config().n_sets
    for k in range(1, 5):  # four conflicting fills take all 4 ways
        m.access(1, k * n_sets * 64, "L", k * 1_000_000)
    level, _, _ = m.access(0, 0x0, "L", 10_000_000)
    assert level == HIT_MEM


def test_determinism_identical_event_streams():
    import random

    def run():
        rng = random.Random(1234)
        cfg, m = tiny_machine()
        equal_partition(cfg, m, ways={0: 2, 1: 2},
                        bw={0: Fraction(6), 1: Fraction(10)})
        trace = []
        t = 0
        for _ in range(3000):
            app = rng.randint(0, 1)
            addr = rng.randrange(0, 32 * 1024, 64)
            level, lat, _ = m.access(app, addr, "L", t)
            trace.append((app, addr, level, lat))
            t += rng.randint(1, 2000)
        return trace

    assert run() == run()
