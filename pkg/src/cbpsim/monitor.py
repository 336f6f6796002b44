"""Runtime measurement: stack-distance profilers, delay totals, IPC samples.

The :class:`UtilityMonitor` shadows the LLC for one application: on a sample
of the LLC sets it keeps a fully-associative LRU tag stack of depth equal to
the total way count and counts hits per recency position.  From those
counters ``misses(w)`` for every possible way allocation falls out directly,
which is what the cache allocation controller consumes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

ATD_MISS = 0  # returned by observe() for a miss (positions start at 1)


class UtilityMonitor:
    """Per-application miss-vs-ways profiler over sampled LLC sets."""

    def __init__(self, n_sets: int, ways: int, sample_period: int = 32,
                 line_bytes: int = 64):
        if sample_period < 1:
            raise ValueError("sample_period must be >= 1")
        self.n_sets = n_sets
        self.ways = ways
        self.sample_period = sample_period
        self._line_shift = line_bytes.bit_length() - 1
        self._stacks: dict[int, list] = {}
        self.hit_counter = [0] * (ways + 1)  # index 1..ways
        self.access_count = 0
        self.miss_count = 0

    def sampled_sets(self) -> int:
        return (self.n_sets + self.sample_period - 1) // self.sample_period

    def observe(self, addr: int):
        """Record one LLC-bound demand access.

        Returns the LRU stack position of the hit (1 = most recent),
        ATD_MISS for a miss, or None when the address maps to a set that is
        not sampled.
        """
        line = addr >> self._line_shift
        set_idx = line % self.n_sets
        if set_idx % self.sample_period:
            return None
        self.access_count += 1
        stack = self._stacks.get(set_idx)
        if stack is None:
            stack = []
            self._stacks[set_idx] = stack
        try:
            pos = stack.index(line)
        except ValueError:
            self.miss_count += 1
            stack.insert(0, line)
            if len(stack) > self.ways:
                stack.pop()
            return ATD_MISS
        del stack[pos]
        stack.insert(0, line)
        self.hit_counter[pos + 1] += 1
        return pos + 1

    def miss_curve(self) -> tuple:
        """misses(w) for w = 1..ways; non-increasing by construction."""
        out = []
        misses = self.access_count
        for w in range(1, self.ways + 1):
            misses -= self.hit_counter[w]
            out.append(misses)
        return tuple(out)

    def decay(self) -> None:
        """Integer-halve all counters (floor), keeping recent history dominant.

        Halving each hit counter can only lower their sum at least as fast
        as access_count, so the curve stays well formed.
        """
        self.access_count //= 2
        self.miss_count //= 2
        for w in range(1, self.ways + 1):
            self.hit_counter[w] //= 2

    def snapshot(self) -> dict:
        return {
            "access_count": self.access_count,
            "miss_count": self.miss_count,
            "hit_counter": tuple(self.hit_counter[1:]),
            "miss_curve": self.miss_curve(),
        }


class QueueDelayTotals:
    """Running per-application queueing-delay totals (picoseconds).

    Totals accumulate across reconfiguration intervals and are never reset
    unless the optional reset knob is enabled.
    """

    def __init__(self):
        self._totals: dict[int, int] = {}

    def accumulate(self, app: int, delay_ps: int) -> int:
        if delay_ps < 0:
            raise ValueError("queue delay must be non-negative")
        total = self._totals.get(app, 0) + delay_ps
        self._totals[app] = total
        return total

    def total(self, app: int) -> int:
        return self._totals.get(app, 0)

    def as_dict(self) -> dict:
        return dict(self._totals)

    def reset(self) -> None:
        self._totals.clear()


@dataclass(frozen=True)
class IpcSample:
    """Instructions and cycles retired by one app over one sampling window."""

    app: int
    instructions: int
    cycles: float
    prefetch_on: bool

    @property
    def ipc(self) -> float:
        return self.instructions / self.cycles


def sample_ipc(app: int, instructions: int, cycles: float,
               prefetch_on: bool) -> IpcSample:
    if cycles <= 0:
        raise ValueError(f"zero-cycle sampling window for app {app}")
    return IpcSample(app, instructions, cycles, prefetch_on)


def write_monitor_csv(path: str | Path, monitors: dict,
                      delays: QueueDelayTotals | None = None) -> None:
    """Dump per-app miss curves and delay totals for debugging."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["app", "access_count", "miss_count",
                         "queue_delay_ns", "miss_curve"])
        for app in sorted(monitors):
            mon = monitors[app]
            delay_ns = (delays.total(app) / 1000.0) if delays else ""
            curve = " ".join(str(v) for v in mon.miss_curve())
            writer.writerow([app, mon.access_count, mon.miss_count,
                             delay_ns, curve])
