"""Application memory-reference streams.

A stream is a sequence of :class:`AccessRecord` entries: ``gap`` non-memory
instructions followed by one load or store.  Streams come from trace files
(text or binary) or from the synthetic generator, whose knobs shape how
sensitive an application is to cache capacity, memory bandwidth and
prefetching.

Trace file formats
------------------
text    one record per line: ``<gap> <hex addr> <L|S>``, ``#`` comments
binary  5-byte magic ``CBPT\\x01`` followed by little-endian records of
        ``(u32 gap, u64 addr, u8 kind)``, 13 bytes each; kind 0=load 1=store
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd as _gcd
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

LOAD = "L"
STORE = "S"

BINARY_MAGIC = b"CBPT\x01"
_BIN_RECORD = struct.Struct("<IQB")


class TraceError(ValueError):
    """Malformed or empty trace input."""


class AccessRecord(NamedTuple):
    gap: int    # non-memory instructions since the previous record
    addr: int   # byte address
    kind: str   # LOAD or STORE

    @property
    def instructions(self) -> int:
        return self.gap + 1


# --------------------------------------------------------------------------
# trace files


class Trace:
    """An in-memory trace with its source path, iterable any number of times."""

    def __init__(self, records: list[AccessRecord], path: str | None = None):
        if not records:
            raise TraceError(f"trace {path or '<memory>'} contains no records")
        self.records = records
        self.path = path

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[AccessRecord]:
        return iter(self.records)


def _parse_text(path: Path) -> list[AccessRecord]:
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 3:
            raise TraceError(f"{path}:{lineno}: expected '<gap> <addr> <L|S>'")
        gap_s, addr_s, kind = parts
        try:
            gap = int(gap_s)
            addr = int(addr_s, 16)
        except ValueError:
            raise TraceError(f"{path}:{lineno}: bad gap or address")
        if gap < 0 or addr < 0:
            raise TraceError(f"{path}:{lineno}: negative gap or address")
        if kind not in (LOAD, STORE):
            raise TraceError(f"{path}:{lineno}: kind must be L or S")
        records.append(AccessRecord(gap, addr, kind))
    return records


def _parse_binary(path: Path) -> list[AccessRecord]:
    blob = path.read_bytes()
    if not blob.startswith(BINARY_MAGIC):
        raise TraceError(f"{path}: missing {BINARY_MAGIC!r} magic header")
    payload = blob[len(BINARY_MAGIC):]
    if len(payload) % _BIN_RECORD.size != 0:
        raise TraceError(
            f"{path}: truncated record at byte offset "
            f"{len(BINARY_MAGIC) + len(payload) - len(payload) % _BIN_RECORD.size}")
    records = []
    for off, (gap, addr, kind_b) in enumerate(_BIN_RECORD.iter_unpack(payload)):
        if kind_b not in (0, 1):
            raise TraceError(f"{path}: bad kind byte in record {off}")
        records.append(AccessRecord(gap, addr, STORE if kind_b else LOAD))
    return records


def load_trace(path: str | Path, fmt: str = "auto") -> Trace:
    """Load a trace file; ``fmt`` is ``text``, ``binary`` or ``auto`` (sniff)."""
    path = Path(path)
    if fmt == "auto":
        with path.open("rb") as fh:
            head = fh.read(len(BINARY_MAGIC))
        fmt = "binary" if head == BINARY_MAGIC else "text"
    if fmt == "text":
        records = _parse_text(path)
    elif fmt == "binary":
        records = _parse_binary(path)
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return Trace(records, str(path))


def write_trace(records: Iterable[AccessRecord], path: str | Path,
                fmt: str = "text") -> int:
    """Write records to ``path``; returns the record count."""
    path = Path(path)
    count = 0
    if fmt == "text":
        with path.open("w") as fh:
            for rec in records:
                fh.write(f"{rec.gap} 0x{rec.addr:x} {rec.kind}\n")
                count += 1
    elif fmt == "binary":
        with path.open("wb") as fh:
            fh.write(BINARY_MAGIC)
            for rec in records:
                fh.write(_BIN_RECORD.pack(rec.gap, rec.addr,
                                          1 if rec.kind == STORE else 0))
                count += 1
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return count


# --------------------------------------------------------------------------
# synthetic applications


@dataclass(frozen=True)
class SyntheticAppSpec:
    """Knobs of a synthetic application.

    working_set_bytes   span of all generated addresses
    reuse_skew          hot-set concentration in [0, 1]: 0 keeps the whole
                        working set uniformly hot (random accesses), larger
                        values shrink the hot pool and divert part of the
                        accesses to a sequential scan of the cold remainder
    mem_intensity       memory accesses per 1000 instructions
    stride_fraction     fraction of accesses produced by strided runs
    stride_bytes        step of a strided run; runs stream through the
                        working set page after page
    page_bytes          strided runs never cross this alignment
    seed                generator seed
    base                lowest generated address
    """

    working_set_bytes: int
    reuse_skew: float = 0.0
    mem_intensity: float = 50.0
    stride_fraction: float = 0.0
    stride_bytes: int = 64
    page_bytes: int = 4096
    seed: int = 0
    base: int = 0

    def validate(self) -> "SyntheticAppSpec":
        if self.working_set_bytes < 64:
            raise ValueError("working_set_bytes must be at least one line")
        for name in ("reuse_skew", "stride_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.mem_intensity <= 0:
            raise ValueError("mem_intensity must be positive")
        if not 0 < self.stride_bytes < self.page_bytes:
            raise ValueError("need 0 < stride_bytes < page_bytes")
        return self


_LINE = 64          # footprint accounting assumes 64-byte lines
_CHUNK = 8192


class SyntheticStream:
    """Deterministic, endlessly regenerable access stream for one spec.

    Two-pool address model: a hot pool of ``(1 - reuse_skew)`` of the working
    set receives uniform random accesses, the cold remainder is walked
    sequentially by ``0.2 * reuse_skew`` of the non-strided accesses.
    Strided accesses advance by ``stride_bytes`` within one page; when the
    next step would cross the page (or working-set) edge, the run restarts
    at the start of a page a fixed co-prime hop away, so the strided side
    streams through the whole working set without early revisits.  Only the
    first run starts at a random position.
    """

    def __init__(self, spec: SyntheticAppSpec, seed_offset: int = 0):
        spec.validate()
        self.spec = spec
        self._seed = (spec.seed + seed_offset) % 2**64
        ws = spec.working_set_bytes
        self._ws_lines = max(1, ws // _LINE)
        self._hot_lines = max(1, round(self._ws_lines * (1.0 - spec.reuse_skew)))
        self._cold_lines = self._ws_lines - self._hot_lines
        self._p_hot = 1.0 - 0.2 * spec.reuse_skew
        self._mean_gap = max(0.0, 1000.0 / spec.mem_intensity - 1.0)
        self._stride_slots = max(1, (ws - spec.stride_bytes) // spec.stride_bytes)
        self._n_pages = max(1, ws // spec.page_bytes)
        hop = 17 if self._n_pages > 17 else 1
        while hop > 1 and _gcd(hop, self._n_pages) != 1:
            hop += 2
        self._page_hop = hop
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(self._seed)
        self._cold_ptr = 0
        self._run_next = -1  # -1: first strided run not started yet
        self.n_strided = 0
        self.n_pool = 0

    def chunks(self, size: int = _CHUNK) -> Iterator[tuple[list, list]]:
        """Yield (gaps, addrs) list pairs forever; all accesses are loads."""
        spec = self.spec
        ws = spec.working_set_bytes
        stride = spec.stride_bytes
        page = spec.page_bytes
        base = spec.base
        hot_lines = self._hot_lines
        cold_lines = self._cold_lines
        while True:
            rng = self._rng
            gaps = rng.poisson(self._mean_gap, size).tolist()
            strided = (rng.random(size) < spec.stride_fraction).tolist()
            hot = (rng.random(size) < self._p_hot).tolist()
            hot_draw = rng.integers(0, hot_lines, size).tolist()
            run_draw = rng.integers(0, self._stride_slots, size).tolist()
            addrs = []
            run_next = self._run_next
            cold_ptr = self._cold_ptr
            n_strided = n_pool = 0
            for i in range(size):
                if strided[i]:
                    if run_next < 0:
                        run_next = run_draw[i] * stride
                    off = run_next
                    nxt = off + stride
                    if nxt + stride > ws or nxt // page != off // page:
                        # run ends at the page or working-set edge; hop to a
                        # page a co-prime distance away so recently visited
                        # lines only come around after a full sweep
                        nxt = ((off // page + self._page_hop)
                               % self._n_pages) * page
                    run_next = nxt
                    n_strided += 1
                elif hot[i] or cold_lines == 0:
                    off = hot_draw[i] * _LINE
                    n_pool += 1
                else:
                    off = (hot_lines + cold_ptr) * _LINE
                    cold_ptr = (cold_ptr + 1) % cold_lines
                    n_pool += 1
                addrs.append(base + off)
            self._run_next = run_next
            self._cold_ptr = cold_ptr
            self.n_strided += n_strided
            self.n_pool += n_pool
            yield gaps, addrs

    def records(self) -> Iterator[AccessRecord]:
        for gaps, addrs in self.chunks():
            for gap, addr in zip(gaps, addrs):
                yield AccessRecord(gap, addr, LOAD)


def generate_synthetic(spec: SyntheticAppSpec,
                       n_instructions: int) -> Iterator[AccessRecord]:
    """Generate records until ``n_instructions`` have been covered.

    Deterministic for a fixed spec (the seed is part of it).  A zero budget
    yields an empty stream.
    """
    if n_instructions < 0:
        raise ValueError("n_instructions must be non-negative")
    done = 0
    if n_instructions == 0:
        return
    for rec in SyntheticStream(spec).records():
        yield rec
        done += rec.instructions
        if done >= n_instructions:
            return


# --------------------------------------------------------------------------
# workload mixes


@dataclass(frozen=True)
class WorkloadMix:
    """One application per core; sources are specs or loaded traces."""

    name: str
    apps: tuple  # of (app_id, SyntheticAppSpec | Trace)

    def __post_init__(self):
        ids = [app_id for app_id, _ in self.apps]
        if not ids:
            raise ValueError("a mix needs at least one application")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate app ids in mix")

    @property
    def core_count(self) -> int:
        return len(self.apps)

    @property
    def app_ids(self) -> tuple[int, ...]:
        return tuple(app_id for app_id, _ in self.apps)


_SIZE_SUFFIX = {"kib": 1024, "mib": 1024**2, "gib": 1024**3,
                "k": 1000, "m": 1000**2}


def _parse_size(raw: str) -> int:
    s = raw.strip().lower()
    for suffix, mult in _SIZE_SUFFIX.items():
        if s.endswith(suffix):
            return int(float(s[: -len(suffix)]) * mult)
    return int(s, 0)


_SPEC_FIELDS = {
    "working_set_bytes": _parse_size,
    "reuse_skew": float,
    "mem_intensity": float,
    "stride_fraction": float,
    "stride_bytes": _parse_size,
    "page_bytes": _parse_size,
    "seed": int,
    "base": lambda s: int(s, 0),
}


def parse_synthetic_spec(inline: str) -> SyntheticAppSpec:
    """Parse ``key=value,key=value`` into a spec; sizes accept KiB/MiB."""
    kwargs = {}
    for item in inline.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"bad spec item {item!r}, expected key=value")
        key, raw = (p.strip() for p in item.split("=", 1))
        if key not in _SPEC_FIELDS:
            raise ValueError(f"unknown spec key {key!r}")
        kwargs[key] = _SPEC_FIELDS[key](raw)
    if "working_set_bytes" not in kwargs:
        raise ValueError("spec needs working_set_bytes")
    return SyntheticAppSpec(**kwargs).validate()


def load_mix(path: str | Path, name: str | None = None) -> WorkloadMix:
    """Read a mix file: one ``synthetic:<spec>`` or ``trace:<path>`` per line.

    Trace paths are resolved relative to the mix file location.
    """
    path = Path(path)
    apps = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if ":" not in body:
            raise ValueError(f"{path}:{lineno}: expected 'synthetic:...' or 'trace:...'")
        kind, rest = body.split(":", 1)
        kind = kind.strip().lower()
        app_id = len(apps)
        if kind == "synthetic":
            apps.append((app_id, parse_synthetic_spec(rest)))
        elif kind == "trace":
            trace_path = Path(rest.strip())
            if not trace_path.is_absolute():
                trace_path = path.parent / trace_path
            apps.append((app_id, load_trace(trace_path)))
        else:
            raise ValueError(f"{path}:{lineno}: unknown source kind {kind!r}")
    return WorkloadMix(name or path.stem, tuple(apps))


# --------------------------------------------------------------------------
# sensitivity classification


@dataclass(frozen=True)
class ClassifySettings:
    """Low/base/high single-resource settings for the sensitivity probe."""

    cache_low_bytes: int = 64 * 1024
    cache_base_bytes: int = 256 * 1024
    cache_high_bytes: int = 1024 * 1024
    bw_low_gbs: float = 1.0
    bw_base_gbs: float = 4.0
    bw_high_gbs: float = 16.0
    threshold: float = 0.10


class SensitivityResult(NamedTuple):
    cache_sensitive: bool
    bandwidth_sensitive: bool
    prefetch_sensitive: bool
    ipcs: dict


def classify_sensitivity(spec: SyntheticAppSpec, sim_env,
                         settings: ClassifySettings = ClassifySettings()
                         ) -> SensitivityResult:
    """Probe one application alone under single-resource changes.

    ``sim_env`` must provide ``measure_ipc(spec, llc_bytes, bw_gbs,
    prefetch_on) -> float``.  An application counts as sensitive to a
    resource when either the low or the high setting moves IPC by at least
    ``threshold`` relative to the base setting (prefetching: enabling it at
    the base allocation).
    """
    s = settings
    base = sim_env.measure_ipc(spec, s.cache_base_bytes, s.bw_base_gbs, False)
    if base <= 0:
        raise ValueError("baseline IPC is not positive")
    ipcs = {"base": base}
    ipcs["cache_low"] = sim_env.measure_ipc(spec, s.cache_low_bytes, s.bw_base_gbs, False)
    ipcs["cache_high"] = sim_env.measure_ipc(spec, s.cache_high_bytes, s.bw_base_gbs, False)
    ipcs["bw_low"] = sim_env.measure_ipc(spec, s.cache_base_bytes, s.bw_low_gbs, False)
    ipcs["bw_high"] = sim_env.measure_ipc(spec, s.cache_base_bytes, s.bw_high_gbs, False)
    ipcs["prefetch"] = sim_env.measure_ipc(spec, s.cache_base_bytes, s.bw_base_gbs, True)

    def deviates(key: str) -> bool:
        return abs(ipcs[key] / base - 1.0) >= s.threshold

    return SensitivityResult(
        cache_sensitive=deviates("cache_low") or deviates("cache_high"),
        bandwidth_sensitive=deviates("bw_low") or deviates("bw_high"),
        prefetch_sensitive=deviates("prefetch"),
        ipcs=ipcs,
    )
