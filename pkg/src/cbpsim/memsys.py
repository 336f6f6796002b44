"""Memory system: private L1/L2, way-partitionable shared LLC, channels.

The hierarchy is inclusive (L1 within L2 within LLC, maintained by
back-invalidation), timing is integer picoseconds so identical runs are
bit-identical.  Bandwidth partitioning is enforced by injecting a
per-application delay on the memory path:

    injected_ns = K * (total_bw / share - 1)

with K from the configuration.  Each memory channel is a single-server FIFO
whose service time is one line at the channel rate; queueing delay is the
wait for the server.  A serviced request always satisfies
``total = base + queue + injected``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import OrderedDict
from fractions import Fraction
from typing import NamedTuple

from .config import SimConfig
from .prefetch import PrefetchStats

# hit levels returned by access()
HIT_L1, HIT_L2, HIT_LLC, HIT_MEM = 0, 1, 2, 3
LEVEL_NAMES = ("L1", "L2", "LLC", "MEM")

FLAG_PF = 1    # line was brought in by a prefetch
FLAG_USED = 2  # prefetched line saw a demand hit

_APP_SHIFT = 44
_LINE_MASK = (1 << _APP_SHIFT) - 1


class MemsysError(Exception):
    pass


class AddressError(MemsysError):
    pass


class PartitionError(MemsysError):
    pass


class MemTiming(NamedTuple):
    """Timing decomposition of one memory request (picoseconds)."""

    base_ps: int
    queue_ps: int
    injected_ps: int
    total_ps: int

    @property
    def base_ns(self) -> float:
        return self.base_ps / 1000.0

    @property
    def queue_ns(self) -> float:
        return self.queue_ps / 1000.0

    @property
    def injected_ns(self) -> float:
        return self.injected_ps / 1000.0

    @property
    def total_ns(self) -> float:
        return self.total_ps / 1000.0


@dataclass
class QueueStats:
    """Per-application accumulated queueing delay and request counts."""

    queue_delay_ps: dict = field(default_factory=dict)
    requests: dict = field(default_factory=dict)

    def add(self, app: int, delay_ps: int) -> None:
        self.queue_delay_ps[app] = self.queue_delay_ps.get(app, 0) + delay_ps
        self.requests[app] = self.requests.get(app, 0) + 1

    def reset(self) -> None:
        self.queue_delay_ps.clear()
        self.requests.clear()


@dataclass(frozen=True)
class PartitionState:
    """Complete resource assignment: LLC ways, bandwidth shares, prefetch bits.

    ``ways_per_app`` / ``bw_share_per_app`` may be None, meaning the resource
    is left unpartitioned (shared LRU / no delay injection).
    """

    ways_per_app: dict | None
    bw_share_per_app: dict | None
    prefetch_on_per_app: dict


class _PrivateCache:
    """Set-associative LRU cache; values are [flags, ready_ps] lists."""

    __slots__ = ("n_sets", "ways", "sets")

    def __init__(self, n_sets: int, ways: int):
        self.n_sets = n_sets
        self.ways = ways
        self.sets = [OrderedDict() for _ in range(n_sets)]

    def resident_keys(self):
        for s in self.sets:
            yield from s.keys()


class _SharedLLC:
    """Way-partitioned shared cache with explicit physical way slots."""

    def __init__(self, n_sets: int, ways: int):
        self.n_sets = n_sets
        self.ways = ways
        self.way_key = [[None] * ways for _ in range(n_sets)]
        self.way_flags = [[0] * ways for _ in range(n_sets)]
        self.way_ready = [[0] * ways for _ in range(n_sets)]
        self.way_stamp = [[0] * ways for _ in range(n_sets)]
        self.where = [dict() for _ in range(n_sets)]
        self.owner: list = [None] * ways          # way index -> app id
        self.app_ways: dict[int, tuple] = {}      # app id -> way indices
        self.all_ways = tuple(range(ways))
        self.partitioned = False


class Machine:
    """The shared memory system for one workload run."""

    def __init__(self, cfg: SimConfig, app_ids):
        cfg.validate()
        if cfg.line_bytes & (cfg.line_bytes - 1):
            raise MemsysError("line_bytes must be a power of two")
        self.cfg = cfg
        self.apps = tuple(app_ids)
        for app in self.apps:
            if not 0 <= app < (1 << (64 - _APP_SHIFT)):
                raise MemsysError(f"app id {app} out of range")
        self.line_shift = cfg.line_bytes.bit_length() - 1
        self.phys_limit = 1 << cfg.phys_addr_bits

        l1c, l2c, llcc = cfg.l1_config(), cfg.l2_config(), cfg.llc_config()
        self.l1 = {a: _PrivateCache(l1c.n_sets, l1c.ways) for a in self.apps}
        self.l2 = {a: _PrivateCache(l2c.n_sets, l2c.ways) for a in self.apps}
        self.llc = _SharedLLC(llcc.n_sets, llcc.ways)

        cyc = cfg.cycle_ps
        self.lat_l1 = l1c.data_latency * cyc
        self.lat_l2_hit = (l1c.tag_latency + l2c.data_latency) * cyc
        self.lat_llc_hit = (l1c.tag_latency + l2c.tag_latency
                            + cfg.noc_cycles + llcc.data_latency) * cyc
        self.lat_mem_lookup = (l1c.tag_latency + l2c.tag_latency
                               + cfg.noc_cycles + llcc.tag_latency) * cyc
        self.mem_ps = cfg.mem_latency_ps
        self.service_ps = cfg.channel_service_ps()
        self.n_channels = cfg.channels
        self.channel_busy = [0] * cfg.channels

        self.queue_stats = QueueStats()
        self.pf_stats = {a: PrefetchStats() for a in self.apps}
        self.injected_ps = {a: 0 for a in self.apps}
        self.partition = PartitionState(None, None,
                                        {a: False for a in self.apps})
        self._stamp = 0
        self.demand_accesses = 0
        self.prefetch_fills = 0

    # ---- demand path ----

    def access(self, app: int, addr: int, kind: str, now_ps: int,
               prefetch_flag: bool = False):
        """Walk the hierarchy for one access.

        Returns ``(level, latency_ps, timing)`` where ``timing`` is the
        MemTiming of the memory request (None unless level is MEM).  With
        ``prefetch_flag`` the access is treated as a prefetch fill and the
        return value is the MemTiming or None if the line was already
        cached.
        """
        if not 0 <= addr < self.phys_limit:
            raise AddressError(f"address {addr:#x} outside modeled space")
        if prefetch_flag:
            return self.prefetch_fill(app, addr, now_ps)
        self.demand_accesses += 1
        line = addr >> self.line_shift
        key = (app << _APP_SHIFT) | line

        l1 = self.l1[app]
        set1 = l1.sets[line % l1.n_sets]
        if key in set1:
            set1.move_to_end(key)
            return HIT_L1, self.lat_l1, None

        l2 = self.l2[app]
        set2 = l2.sets[line % l2.n_sets]
        ent = set2.get(key)
        if ent is not None:
            set2.move_to_end(key)
            lat = self.lat_l2_hit
            if ent[1] > now_ps:  # prefetch still in flight
                lat = max(lat, ent[1] - now_ps)
            if ent[0] & FLAG_PF and not ent[0] & FLAG_USED:
                ent[0] |= FLAG_USED
                self._mark_llc_used(line, key)
                self.pf_stats[app].useful += 1
            self._fill_l1(l1, line, key)
            return HIT_L2, lat, None

        llc = self.llc
        set_idx = line % llc.n_sets
        way = llc.where[set_idx].get(key)
        if way is not None:
            self._stamp += 1
            llc.way_stamp[set_idx][way] = self._stamp
            lat = self.lat_llc_hit
            ready = llc.way_ready[set_idx][way]
            if ready > now_ps:
                lat = max(lat, ready - now_ps)
            flags = llc.way_flags[set_idx][way]
            if flags & FLAG_PF and not flags & FLAG_USED:
                llc.way_flags[set_idx][way] = flags | FLAG_USED
                self.pf_stats[app].useful += 1
            self._fill_l2(app, l2, line, key, 0, 0)
            self._fill_l1(l1, line, key)
            return HIT_LLC, lat, None

        timing = self.memory_service(app, now_ps + self.lat_mem_lookup, addr)
        self._llc_insert(app, set_idx, key, 0, 0)
        self._fill_l2(app, l2, line, key, 0, 0)
        self._fill_l1(l1, line, key)
        return HIT_MEM, self.lat_mem_lookup + timing.total_ps, timing

    def prefetch_fill(self, app: int, addr: int, now_ps: int):
        """Fetch a line ahead of demand; returns its MemTiming or None.

        Lines already present in the application's L2 or in the LLC are
        skipped.  The fetched line lands in LLC and L2 flagged as a
        prefetch, becoming usable at its memory completion time.
        """
        if not 0 <= addr < self.phys_limit:
            return None
        line = addr >> self.line_shift
        key = (app << _APP_SHIFT) | line
        l2 = self.l2[app]
        if key in l2.sets[line % l2.n_sets]:
            return None
        llc = self.llc
        set_idx = line % llc.n_sets
        if key in llc.where[set_idx]:
            return None
        timing = self.memory_service(app, now_ps + self.lat_mem_lookup, addr)
        ready = now_ps + self.lat_mem_lookup + timing.total_ps
        self._llc_insert(app, set_idx, key, FLAG_PF, ready)
        self._fill_l2(app, l2, line, key, FLAG_PF, ready)
        self.pf_stats[app].issued += 1
        self.prefetch_fills += 1
        return timing

    def memory_service(self, app: int, when_ps: int, addr: int) -> MemTiming:
        """Route a request to its channel and account queue/injected delay."""
        ch = (addr >> self.line_shift) % self.n_channels
        inj = self.injected_ps[app]
        start = when_ps + inj
        q = self.channel_busy[ch] - start
        if q < 0:
            q = 0
        self.channel_busy[ch] = start + q + self.service_ps
        self.queue_stats.add(app, q)
        return MemTiming(self.mem_ps, q, inj, self.mem_ps + q + inj)

    # ---- fills, evictions, invalidation ----

    def _fill_l1(self, l1: _PrivateCache, line: int, key: int) -> None:
        s = l1.sets[line % l1.n_sets]
        s[key] = None
        if len(s) > l1.ways:
            s.popitem(last=False)  # L1 victims stay in L2: silent drop

    def _fill_l2(self, app: int, l2: _PrivateCache, line: int, key: int,
                 flags: int, ready: int) -> None:
        s = l2.sets[line % l2.n_sets]
        if key in s:
            s.move_to_end(key)
            return
        s[key] = [flags, ready]
        if len(s) > l2.ways:
            victim, _ = s.popitem(last=False)
            self._l1_invalidate(app, victim)

    def _l1_invalidate(self, app: int, key: int) -> None:
        l1 = self.l1[app]
        l1.sets[(key & _LINE_MASK) % l1.n_sets].pop(key, None)

    def _l2_invalidate(self, app: int, key: int) -> None:
        l2 = self.l2[app]
        l2.sets[(key & _LINE_MASK) % l2.n_sets].pop(key, None)
        self._l1_invalidate(app, key)

    def _mark_llc_used(self, line: int, key: int) -> None:
        llc = self.llc
        set_idx = line % llc.n_sets
        way = llc.where[set_idx].get(key)
        if way is not None:
            llc.way_flags[set_idx][way] |= FLAG_USED

    def _llc_insert(self, app: int, set_idx: int, key: int, flags: int,
                    ready: int) -> None:
        llc = self.llc
        if llc.partitioned:
            ways = llc.app_ways.get(app)
            if not ways:
                raise PartitionError(f"app {app} owns no LLC ways")
        else:
            ways = llc.all_ways
        keys_row = llc.way_key[set_idx]
        target = -1
        for w in ways:
            if keys_row[w] is None:
                target = w
                break
        if target < 0:
            stamps = llc.way_stamp[set_idx]
            best = 1 << 62
            for w in ways:
                s = stamps[w]
                if s < best:
                    best = s
                    target = w
            self._evict_llc(set_idx, target)
        keys_row[target] = key
        llc.way_flags[set_idx][target] = flags
        llc.way_ready[set_idx][target] = ready
        self._stamp += 1
        llc.way_stamp[set_idx][target] = self._stamp
        llc.where[set_idx][key] = target

    def _evict_llc(self, set_idx: int, way: int) -> None:
        """Drop one LLC slot with inclusion back-invalidation."""
        llc = self.llc
        key = llc.way_key[set_idx][way]
        if key is None:
            return
        flags = llc.way_flags[set_idx][way]
        app = key >> _APP_SHIFT
        if flags & FLAG_PF and not flags & FLAG_USED:
            self.pf_stats[app].evicted_unused += 1
        llc.way_key[set_idx][way] = None
        llc.way_flags[set_idx][way] = 0
        llc.way_ready[set_idx][way] = 0
        llc.way_stamp[set_idx][way] = 0
        del llc.where[set_idx][key]
        self._l2_invalidate(app, key)

    # ---- partition enforcement ----

    def apply_partition(self, new: PartitionState) -> dict:
        """Install a new partition; returns per-app invalidated line counts.

        An invalid state is rejected with PartitionError and nothing
        changes.  Lines sitting in ways their application no longer owns
        are invalidated eagerly (with back-invalidation), so re-touching
        them costs a full memory fetch.
        """
        self._validate_partition(new)
        counts = {a: 0 for a in self.apps}
        if new.ways_per_app is None:
            if self.llc.partitioned:
                self.llc.partitioned = False
                self.llc.owner = [None] * self.llc.ways
                self.llc.app_ways = {}
        else:
            counts = self._reassign_ways(new.ways_per_app)
        if new.bw_share_per_app is None:
            self.injected_ps = {a: 0 for a in self.apps}
        else:
            total = Fraction(str(self.cfg.total_bw_gbs))
            k_ns = self.cfg.mba_delay_ns
            self.injected_ps = {
                a: round(1000.0 * k_ns * float(total / Fraction(share) - 1))
                for a, share in new.bw_share_per_app.items()}
        self.partition = new
        return counts

    def _validate_partition(self, new: PartitionState) -> None:
        apps = set(self.apps)
        ways = new.ways_per_app
        if ways is not None:
            if set(ways) != apps:
                raise PartitionError("way plan must cover exactly the apps")
            if any(w < self.cfg.min_ways for w in ways.values()):
                raise PartitionError(
                    f"way plan below min_ways={self.cfg.min_ways}: {ways}")
            if sum(ways.values()) > self.llc.ways:
                raise PartitionError(f"way plan exceeds {self.llc.ways} ways")
        bw = new.bw_share_per_app
        if bw is not None:
            if set(bw) != apps:
                raise PartitionError("bandwidth plan must cover exactly the apps")
            min_bw = Fraction(str(self.cfg.min_bw_gbs))
            total = Fraction(str(self.cfg.total_bw_gbs))
            shares = {a: Fraction(s) for a, s in bw.items()}
            if any(s < min_bw for s in shares.values()):
                raise PartitionError("bandwidth share below minimum")
            if abs(sum(shares.values()) - total) > min_bw:
                raise PartitionError("bandwidth shares do not add up to total")
        if set(new.prefetch_on_per_app) != apps:
            raise PartitionError("prefetch plan must cover exactly the apps")

    def _reassign_ways(self, ways_per_app: dict) -> dict:
        llc = self.llc
        was_partitioned = llc.partitioned
        old_owner = list(llc.owner)
        apps_sorted = sorted(ways_per_app)
        kept = {}
        freed = [w for w in range(llc.ways)
                 if old_owner[w] is None or old_owner[w] not in ways_per_app]
        for a in apps_sorted:
            cur = sorted(llc.app_ways.get(a, ())) if was_partitioned else []
            want = ways_per_app[a]
            kept[a] = cur[:want]
            freed.extend(cur[want:])  # shrinking apps release highest ways
        freed.sort()
        for a in apps_sorted:
            need = ways_per_app[a] - len(kept[a])
            if need > 0:
                kept[a].extend(freed[:need])
                del freed[:need]
        new_owner: list = [None] * llc.ways
        for a, ws in kept.items():
            for w in ws:
                new_owner[w] = a
        if was_partitioned:
            touched = [w for w in range(llc.ways) if new_owner[w] != old_owner[w]]
        else:
            touched = list(range(llc.ways))  # anything may sit anywhere
        counts = {a: 0 for a in self.apps}
        if touched:
            for set_idx in range(llc.n_sets):
                row = llc.way_key[set_idx]
                for w in touched:
                    key = row[w]
                    if key is not None and key >> _APP_SHIFT != new_owner[w]:
                        counts[key >> _APP_SHIFT] += 1
                        self._evict_llc(set_idx, w)
        llc.owner = new_owner
        llc.app_ways = {a: tuple(ws) for a, ws in kept.items()}
        llc.partitioned = True
        return counts

    # ---- introspection / invariant checks ----

    def resident_llc_lines(self, app: int | None = None) -> int:
        n = 0
        for d in self.llc.where:
            if app is None:
                n += len(d)
            else:
                n += sum(1 for key in d if key >> _APP_SHIFT == app)
        return n

    def lines_in_ways(self, way_indices) -> int:
        ways = set(way_indices)
        return sum(1 for row in self.llc.way_key
                   for w in ways if row[w] is not None)

    def check_inclusion(self) -> list[str]:
        """Every L1/L2-resident line must also be LLC-resident."""
        bad = []
        llc = self.llc
        for app in self.apps:
            for name, cache in (("L1", self.l1[app]), ("L2", self.l2[app])):
                for key in cache.resident_keys():
                    line = key & _LINE_MASK
                    if key not in llc.where[line % llc.n_sets]:
                        bad.append(f"{name} line {line:#x} of app {app} "
                                   f"missing from LLC")
        return bad

    def check_way_containment(self) -> list[str]:
        bad = []
        llc = self.llc
        if not llc.partitioned:
            return bad
        for set_idx, row in enumerate(llc.way_key):
            for w, key in enumerate(row):
                if key is None:
                    continue
                app = key >> _APP_SHIFT
                if llc.owner[w] != app:
                    bad.append(f"set {set_idx} way {w}: line of app {app} "
                               f"in way owned by {llc.owner[w]}")
        return bad

    def check_conservation(self) -> list[str]:
        bad = []
        part = self.partition
        if part.ways_per_app is not None:
            if sum(part.ways_per_app.values()) > self.llc.ways:
                bad.append("assigned ways exceed total")
        if part.bw_share_per_app is not None:
            total = Fraction(str(self.cfg.total_bw_gbs))
            s = sum(Fraction(v) for v in part.bw_share_per_app.values())
            if abs(s - total) > Fraction(str(self.cfg.min_bw_gbs)):
                bad.append(f"bandwidth shares sum to {float(s)}, "
                           f"expected {float(total)}")
        return bad

    def check_all(self) -> list[str]:
        return (self.check_inclusion() + self.check_way_containment()
                + self.check_conservation())
