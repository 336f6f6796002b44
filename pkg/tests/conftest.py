"""Shared helpers for the test suite."""

import pytest

from cbpsim import SimConfig, SyntheticAppSpec, WorkloadMix


def desk_config(**overrides) -> SimConfig:
    """A small, fast configuration with short controller intervals."""
    kwargs = dict(
        llc_size_bytes=512 * 1024,
        llc_ways=16,
        channels=2,
        channel_bw_gbs=16.0,
        reconfiguration_interval_ms=0.05,
        prefetch_sampling_period_ms=0.005,
        prefetch_interval_ms=0.05,
        atd_sample_period=1,
        mba_delay_ns=1.0,
        min_ways=4,
        warmup_instructions=20_000,
        detailed_instructions=100_000,
    )
    kwargs.update(overrides)
    return SimConfig(**kwargs).validate()


def tradeoff_mix() -> WorkloadMix:
    """Cache-sensitive random app + bandwidth/prefetch-sensitive stream."""
    x = SyntheticAppSpec(working_set_bytes=272 * 1024, reuse_skew=0.0,
                         mem_intensity=40, stride_fraction=0.0, seed=11)
    y = SyntheticAppSpec(working_set_bytes=32 * 1024 * 1024, reuse_skew=0.0,
                         mem_intensity=60, stride_fraction=1.0,
                         stride_bytes=64, seed=22)
    return WorkloadMix("tradeoff", ((0, x), (1, y)))


def tradeoff_config(**overrides) -> SimConfig:
    """Desk config tuned for the two-app trade-off workload."""
    kwargs = dict(channel_bw_gbs=2.0, queue_delay_reset=True)
    kwargs.update(overrides)
    return desk_config(**kwargs)


@pytest.fixture
def cfg():
    return desk_config()
