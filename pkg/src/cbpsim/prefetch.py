"""Per-core stride prefetcher.

Trains on demand accesses that miss the L1 (i.e. the stream the L2 sees),
tracks one flow per page in a small LRU table, and once a flow has shown the
same stride twice issues up to ``degree`` line addresses ahead, never past
the page boundary of the trigger.  Enabling/disabling is controlled from
outside; a disabled prefetcher neither trains nor issues.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class PrefetchStats:
    """Lifetime accounting of prefetched lines for one application."""

    issued: int = 0          # prefetches that fetched a line from memory
    useful: int = 0          # prefetched lines demand-hit before eviction
    evicted_unused: int = 0  # prefetched lines evicted without any hit

    def as_dict(self) -> dict:
        return {"issued": self.issued, "useful": self.useful,
                "evicted_unused": self.evicted_unused}


@dataclass
class StrideFlow:
    page: int
    last_addr: int
    stride: int = 0
    confidence: int = 0
    lru_stamp: int = 0


class StridePrefetcher:
    """Stride detector with a fixed-size flow table (one flow per page)."""

    def __init__(self, degree: int = 4, flows: int = 8,
                 confidence_threshold: int = 2, page_bytes: int = 4096,
                 enabled: bool = False):
        self.degree = degree
        self.max_flows = flows
        self.threshold = confidence_threshold
        self.page_bytes = page_bytes
        self.enabled = enabled
        self._flows: dict[int, StrideFlow] = {}
        self._stamp = 0

    def reset_flows(self) -> None:
        self._flows.clear()

    def observe(self, addr: int) -> list[int]:
        """Train on one demand address; return prefetch addresses to issue."""
        if not self.enabled:
            return []
        page_bytes = self.page_bytes
        page = addr // page_bytes
        self._stamp += 1
        flow = self._flows.get(page)
        if flow is None:
            if len(self._flows) >= self.max_flows:
                victim = min(self._flows.values(), key=lambda f: f.lru_stamp)
                del self._flows[victim.page]
            self._flows[page] = StrideFlow(page, addr, lru_stamp=self._stamp)
            return []
        stride = addr - flow.last_addr
        if stride != 0 and stride == flow.stride:
            flow.confidence += 1
        else:
            flow.stride = stride
            flow.confidence = 1 if stride != 0 else 0
        flow.last_addr = addr
        flow.lru_stamp = self._stamp
        if flow.confidence < self.threshold:
            return []
        out = []
        for k in range(1, self.degree + 1):
            cand = addr + stride * k
            if cand // page_bytes != page or cand < 0:
                break  # stop at the page boundary
            out.append(cand)
        return out
