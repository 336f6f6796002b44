"""Simulator configuration: machine parameters, controller knobs, file I/O.

Configuration files are plain ``key = value`` text, one entry per line,
``#`` starts a comment.  Every key maps 1:1 onto a :class:`SimConfig`
attribute; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CacheConfig:
    """Geometry and latency of one cache level."""

    size_bytes: int
    ways: int
    line_bytes: int
    data_latency: int  # cycles
    tag_latency: int   # cycles
    inclusive: bool = True

    def __post_init__(self) -> None:
        if self.ways < 1:
            raise ConfigError(f"cache needs at least 1 way, got {self.ways}")
        if self.size_bytes % (self.ways * self.line_bytes) != 0:
            raise ConfigError(
                f"cache size {self.size_bytes} not divisible by "
                f"ways*line ({self.ways}*{self.line_bytes})")

    @property
    def n_sets(self) -> int:
        return self.size_bytes // (self.ways * self.line_bytes)


@dataclass
class SimConfig:
    """All tunables of the simulated machine and its resource managers.

    Defaults model a desk-scale setup: a handful of cores at 4 GHz, a
    3-level inclusive hierarchy with a 512 KiB shared 16-way LLC, and two
    16 GB/s memory channels at 80 ns latency.  Controller defaults: 10 ms
    reconfiguration interval, 0.5 ms prefetch sampling windows, speedup
    threshold 1.05, at least 4 ways and 1 GB/s per application.  Short
    experiments want shorter intervals and denser profiler sampling; see
    the README.
    """

    # core
    clock_ghz: float = 4.0
    overlap_factor: float = 0.0  # 0 = memory access fully blocks the core
    # line / address space
    line_bytes: int = 64
    phys_addr_bits: int = 48
    page_bytes: int = 4096
    # private caches
    l1_size_bytes: int = 32 * 1024
    l1_ways: int = 8
    l1_latency_cycles: int = 1
    l2_size_bytes: int = 128 * 1024
    l2_ways: int = 8
    l2_data_cycles: int = 6
    l2_tag_cycles: int = 2
    # shared LLC
    llc_size_bytes: int = 512 * 1024
    llc_ways: int = 16
    llc_data_cycles: int = 9
    llc_tag_cycles: int = 2
    noc_cycles: int = 4  # interconnect hop cost folded into every LLC visit
    # memory
    channels: int = 2
    channel_bw_gbs: float = 16.0
    mem_latency_ns: float = 80.0
    mba_delay_ns: float = 5.0  # enforcement constant K of the delay injection
    # prefetcher
    prefetch_degree: int = 4
    prefetch_flows: int = 8
    prefetch_confidence: int = 2
    prefetch_default_on: bool = False
    # monitors
    atd_sample_period: int = 32  # profile every Nth LLC set; 1 = every set
    queue_delay_reset: bool = False  # clear delay totals at reconfiguration
    # controllers
    reconfiguration_interval_ms: float = 10.0
    prefetch_sampling_period_ms: float = 0.5
    prefetch_interval_ms: float = 10.0
    speedup_threshold: float = 1.05
    min_ways: int = 4
    min_bw_gbs: float = 1.0
    # harness
    warmup_instructions: int = 1_000_000
    detailed_instructions: int = 5_000_000

    # ---- derived quantities ----

    @property
    def cycle_ps(self) -> int:
        return round(1000.0 / self.clock_ghz)

    @property
    def total_bw_gbs(self) -> float:
        return self.channels * self.channel_bw_gbs

    @property
    def mem_latency_ps(self) -> int:
        return round(self.mem_latency_ns * 1000.0)

    def channel_service_ps(self) -> int:
        # one cache line at the per-channel rate (GB/s == bytes/ns)
        return round(1000.0 * self.line_bytes / self.channel_bw_gbs)

    @property
    def reconfiguration_interval_ps(self) -> int:
        return round(self.reconfiguration_interval_ms * 1e9)

    @property
    def prefetch_sampling_period_ps(self) -> int:
        return round(self.prefetch_sampling_period_ms * 1e9)

    @property
    def prefetch_interval_ps(self) -> int:
        return round(self.prefetch_interval_ms * 1e9)

    def l1_config(self) -> CacheConfig:
        return CacheConfig(self.l1_size_bytes, self.l1_ways, self.line_bytes,
                           self.l1_latency_cycles, self.l1_latency_cycles)

    def l2_config(self) -> CacheConfig:
        return CacheConfig(self.l2_size_bytes, self.l2_ways, self.line_bytes,
                           self.l2_data_cycles, self.l2_tag_cycles)

    def llc_config(self) -> CacheConfig:
        return CacheConfig(self.llc_size_bytes, self.llc_ways, self.line_bytes,
                           self.llc_data_cycles, self.llc_tag_cycles)

    def validate(self) -> "SimConfig":
        if self.clock_ghz <= 0:
            raise ConfigError("clock_ghz must be positive")
        if not 0.0 <= self.overlap_factor <= 1.0:
            raise ConfigError("overlap_factor must lie in [0, 1]")
        if self.channels < 1:
            raise ConfigError("need at least one memory channel")
        if self.channel_bw_gbs <= 0 or self.mem_latency_ns < 0:
            raise ConfigError("channel bandwidth/latency out of range")
        if self.min_ways < 1:
            raise ConfigError("min_ways must be >= 1")
        if self.min_bw_gbs <= 0:
            raise ConfigError("min_bw_gbs must be positive")
        if self.atd_sample_period < 1:
            raise ConfigError("atd_sample_period must be >= 1")
        if self.page_bytes < self.line_bytes:
            raise ConfigError("page smaller than a cache line")
        for build in (self.l1_config, self.l2_config, self.llc_config):
            build()  # geometry check
        return self


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "1": True, "0": False}


def _parse_value(kind: type, raw: str, key: str):
    if kind is bool:
        try:
            return _BOOL_WORDS[raw.lower()]
        except KeyError:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind is int:
            return int(raw, 0)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}")


def load_config(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    """Read a key=value config file, overriding ``base`` (default config)."""
    cfg = base if base is not None else SimConfig()
    types = {f.name: f.type for f in fields(SimConfig)}
    kinds = {name: type(getattr(cfg, name)) for name in types}
    values = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(kinds[key], raw, key)
    merged = SimConfig(**{**cfg.__dict__, **values})
    return merged.validate()


def dump_config(cfg: SimConfig, path: str | Path) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(SimConfig)]
    Path(path).write_text("\n".join(lines) + "\n")
