"""Deterministic single-threaded simulation loop.

Applications advance on a shared event heap keyed by ``(time_ps, priority,
id)`` where the time is the moment of the next memory access, so requests
reach the channels in global time order.  Logging ticks and coordinator
wakes run before application steps at equal times; application ties break
by id.  A run is therefore a pure function of (mix, policy, config, seed).

Each application step performs one memory access, blocks the core for the
access latency scaled by ``1 - overlap_factor``, then schedules the next
access after the following record's instruction gap.  Statistics windows
per app cover the first ``detailed_instructions`` after
``warmup_instructions``; apps that finish keep running (streams repeat) so
contention persists until every app is done.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .config import SimConfig
from .controllers import (CoordinatorInputs, RmPolicy, coordinator_step,
                          init_coordinator)
from .memsys import HIT_L1, HIT_LLC, Machine
from .monitor import QueueDelayTotals, UtilityMonitor
from .prefetch import StridePrefetcher
from .traces import SyntheticAppSpec, SyntheticStream, Trace, WorkloadMix

_PRIO_LOG = 0
_PRIO_COORD = 1
_PRIO_APP = 2

_NO_PROGRESS_LIMIT = 500_000


class SimulationError(RuntimeError):
    pass


class _TraceCursor:
    """Endless chunked iteration over a finite trace."""

    def __init__(self, trace: Trace, chunk: int = 4096):
        self._records = trace.records
        self._chunk = chunk
        self._pos = 0

    def next_chunk(self):
        recs = self._records
        pos = self._pos
        end = min(pos + self._chunk, len(recs))
        part = recs[pos:end]
        self._pos = end % len(recs)
        return [r.gap for r in part], [r.addr for r in part]


class _SyntheticCursor:
    def __init__(self, spec: SyntheticAppSpec, seed_offset: int):
        self._gen = SyntheticStream(spec, seed_offset).chunks()

    def next_chunk(self):
        return next(self._gen)


@dataclass
class _AppState:
    app: int
    cursor: object
    gaps: list = field(default_factory=list)
    addrs: list = field(default_factory=list)
    pos: int = 0
    cur_gap: int = 0
    pending_addr: int = 0
    clock_ps: int = 0
    instructions: int = 0
    warm_mark: tuple | None = None   # (instructions, clock) at warmup end
    done_mark: tuple | None = None
    log_mark: tuple = (0, 0)

    def fetch(self):
        if self.pos >= len(self.gaps):
            self.gaps, self.addrs = self.cursor.next_chunk()
            self.pos = 0
            if not self.gaps:
                raise SimulationError(
                    f"app {self.app}: stream yields no records, "
                    f"simulation cannot make progress")
        self.cur_gap = self.gaps[self.pos]
        self.pending_addr = self.addrs[self.pos]
        self.pos += 1


@dataclass
class EngineResult:
    ipc: dict                 # app -> IPC over its detailed window
    timeseries: list          # (interval, app, ways, bw_share, pref_on, ipc)
    allocation_history: list  # (time_ps, PartitionState)
    repartition_events: list  # (time_ps, {app: invalidated lines})
    prefetch_stats: dict      # app -> PrefetchStats
    queue_delay_ps: dict      # app -> accumulated queueing delay
    violations: list
    demand_accesses: int
    prefetch_fills: int
    instructions: dict
    sim_time_ps: int
    controller_log: tuple


class SimEngine:
    """One workload under one resource-management policy."""

    def __init__(self, cfg: SimConfig, mix: WorkloadMix, policy: RmPolicy,
                 seed: int = 0, validate: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.mix = mix
        self.policy = policy
        self.seed = seed
        self.validate = validate
        self.apps = list(mix.app_ids)
        self.machine = Machine(cfg, self.apps)
        llc = cfg.llc_config()
        self.monitors = {a: UtilityMonitor(llc.n_sets, llc.ways,
                                           cfg.atd_sample_period,
                                           cfg.line_bytes)
                         for a in self.apps}
        self.delays = QueueDelayTotals()
        self.prefetchers = {}
        self.states = {}
        for app, source in mix.apps:
            self.prefetchers[app] = StridePrefetcher(
                cfg.prefetch_degree, cfg.prefetch_flows,
                cfg.prefetch_confidence, cfg.page_bytes,
                enabled=cfg.prefetch_default_on)
            if isinstance(source, SyntheticAppSpec):
                cursor = _SyntheticCursor(source, seed_offset=seed)
            elif isinstance(source, Trace):
                cursor = _TraceCursor(source)
            else:
                raise TypeError(f"unsupported app source {type(source)!r}")
            self.states[app] = _AppState(app, cursor)
        self.coord = init_coordinator(policy, cfg, self.apps)
        self.violations: list = []
        self._alloc_history: list = []
        self._repartitions: list = []
        self._timeseries: list = []

    # ---- coordinator plumbing ----

    def _coordinator_inputs(self) -> CoordinatorInputs:
        return CoordinatorInputs(
            miss_curves={a: self.monitors[a].miss_curve() for a in self.apps},
            delay_totals={a: self.delays.total(a) for a in self.apps},
            progress={a: (self.states[a].instructions, self.states[a].clock_ps)
                      for a in self.apps},
        )

    def _run_coordinator(self, now_ps: int) -> None:
        actions, self.coord = coordinator_step(
            self.policy, self.cfg, self.apps, self.coord,
            self._coordinator_inputs(), now_ps)
        for kind, payload in actions:
            if kind == "partition":
                invalidated = self.machine.apply_partition(payload)
                self._alloc_history.append((now_ps, payload))
                if any(invalidated.values()):
                    self._repartitions.append((now_ps, invalidated))
                if self.validate:
                    self.violations.extend(self.machine.check_all())
            elif kind == "prefetch":
                for app, on in payload.items():
                    self.prefetchers[app].enabled = on
            elif kind == "decay":
                for mon in self.monitors.values():
                    mon.decay()
            elif kind == "reset_delays":
                self.delays.reset()

    def _log_tick(self, interval: int) -> None:
        part = self.machine.partition
        cycle = self.cfg.cycle_ps
        for app in self.apps:
            st = self.states[app]
            i0, c0 = st.log_mark
            cycles = (st.clock_ps - c0) / cycle
            ipc = (st.instructions - i0) / cycles if cycles > 0 else None
            st.log_mark = (st.instructions, st.clock_ps)
            ways = (part.ways_per_app or {}).get(app)
            bw = part.bw_share_per_app
            self._timeseries.append(
                (interval, app, ways,
                 float(bw[app]) if bw is not None else None,
                 1 if self.prefetchers[app].enabled else 0, ipc))

    # ---- the loop ----

    def run(self, detailed_instructions: int | None = None,
            warmup_instructions: int | None = None) -> EngineResult:
        cfg = self.cfg
        detailed = (cfg.detailed_instructions if detailed_instructions is None
                    else detailed_instructions)
        warmup = (cfg.warmup_instructions if warmup_instructions is None
                  else warmup_instructions)
        if detailed <= 0:
            raise ValueError("detailed_instructions must be positive")

        machine = self.machine
        monitors = self.monitors
        prefetchers = self.prefetchers
        delays = self.delays
        states = self.states
        cycle_ps = cfg.cycle_ps
        blocked_num = round((1.0 - cfg.overlap_factor) * 1024)
        log_period = cfg.reconfiguration_interval_ps

        heap: list = []
        if self.coord.next_wake_ps is not None:
            heapq.heappush(heap, (self.coord.next_wake_ps, _PRIO_COORD, 0))
        heapq.heappush(heap, (log_period, _PRIO_LOG, 0))
        for app in self.apps:
            st = states[app]
            if warmup == 0:
                st.warm_mark = (0, 0)
            st.fetch()
            heapq.heappush(heap, (st.cur_gap * cycle_ps, _PRIO_APP, app))

        remaining = len(self.apps)
        target = warmup + detailed
        interval = 0
        now = 0
        stuck = 0

        while remaining > 0:
            now, prio, ident = heapq.heappop(heap)
            if prio == _PRIO_COORD:
                self._run_coordinator(now)
                if self.coord.next_wake_ps is not None:
                    heapq.heappush(heap,
                                   (self.coord.next_wake_ps, _PRIO_COORD, 0))
                continue
            if prio == _PRIO_LOG:
                interval += 1
                self._log_tick(interval)
                heapq.heappush(heap, (now + log_period, _PRIO_LOG, 0))
                continue

            st = states[ident]
            gap = st.cur_gap
            addr = st.pending_addr
            level, lat_ps, timing = machine.access(ident, addr, "L", now)
            if level >= HIT_LLC:
                monitors[ident].observe(addr)
            if timing is not None:
                delays.accumulate(ident, timing.queue_ps)
            if level != HIT_L1:
                pf = prefetchers[ident]
                if pf.enabled:
                    # prefetches are requests from the app: their queueing
                    # counts toward its delay total like demand queueing
                    for cand in pf.observe(addr):
                        ptiming = machine.prefetch_fill(ident, cand, now)
                        if ptiming is not None:
                            delays.accumulate(ident, ptiming.queue_ps)
            t = now + ((lat_ps * blocked_num) >> 10)
            if t == now and gap == 0:
                stuck += 1
                if stuck > _NO_PROGRESS_LIMIT:
                    raise SimulationError(
                        f"app {ident}: no forward progress at t={now} ps")
            else:
                stuck = 0

            st.clock_ps = t
            st.instructions += gap + 1
            if st.warm_mark is None and st.instructions >= warmup:
                st.warm_mark = (st.instructions, t)
            if st.done_mark is None and st.instructions >= target:
                st.done_mark = (st.instructions, t)
                remaining -= 1
                if remaining == 0:
                    break
            st.fetch()
            heapq.heappush(heap, (t + st.cur_gap * cycle_ps, _PRIO_APP, ident))

        ipc = {}
        for app in self.apps:
            st = states[app]
            i0, c0 = st.warm_mark
            i1, c1 = st.done_mark
            if c1 <= c0:
                raise SimulationError(f"app {app}: empty measurement window")
            ipc[app] = (i1 - i0) / ((c1 - c0) / cycle_ps)

        return EngineResult(
            ipc=ipc,
            timeseries=self._timeseries,
            allocation_history=self._alloc_history,
            repartition_events=self._repartitions,
            prefetch_stats={a: machine.pf_stats[a] for a in self.apps},
            queue_delay_ps=delays.as_dict(),
            violations=self.violations,
            demand_accesses=machine.demand_accesses,
            prefetch_fills=machine.prefetch_fills,
            instructions={a: states[a].instructions for a in self.apps},
            sim_time_ps=now,
            controller_log=self.coord.action_log,
        )
