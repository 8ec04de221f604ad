"""Space-Saving streaming heavy-hitters sketch.

The classic bounded-memory frequency counter: at most ``capacity`` items are
monitored.  A monitored item's arrival increments its count; a new item
either takes a free slot with (count 1, error 0) or, when the sketch is
full, evicts the minimum-count item j and enters with (count c_j + 1,
error c_j).

Guarantees maintained (and property-tested against an exact counter):

* sum of monitored counts == number of items processed, exactly;
* count >= true frequency >= count - error for every monitored item;
* every item with true frequency > T/capacity is monitored;
* the minimum monitored count is <= T/capacity once the sketch is full.

Eviction ties (several items at the minimum count) are broken by evicting
the lexicographically smallest key, which makes sketch contents a pure
function of the stream.
"""

from __future__ import annotations

import heapq
from typing import Iterable


class SpaceSavingSketch:
    """Bounded-capacity approximate frequency counter over string keys.

    A min-heap of (count, key) entries finds eviction victims in O(log m);
    entries go stale when counts move on and are discarded lazily.  The heap
    is compacted whenever it grows past a small multiple of the capacity, so
    memory stays O(capacity) regardless of stream length.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.total = 0  # items processed (the stream length T)
        self._counts: dict[str, int] = {}
        self._errors: dict[str, int] = {}
        self._heap: list[tuple[int, str]] = []

    def __len__(self) -> int:
        return len(self._counts)

    def update(self, key: str) -> None:
        """Feed one stream item into the sketch."""
        self.total += 1
        counts = self._counts
        cur = counts.get(key)
        if cur is not None:
            counts[key] = cur + 1
            heapq.heappush(self._heap, (cur + 1, key))
        elif len(counts) < self.capacity:
            counts[key] = 1
            self._errors[key] = 0
            heapq.heappush(self._heap, (1, key))
        else:
            # Pop stale heap entries until the top reflects a live count; that
            # top is then the true minimum (count, key), i.e. the smallest
            # count with the lexicographically smallest key.
            heap = self._heap
            while True:
                min_count, min_key = heap[0]
                if counts.get(min_key) == min_count:
                    break
                heapq.heappop(heap)
            heapq.heappop(heap)
            del counts[min_key]
            del self._errors[min_key]
            counts[key] = min_count + 1
            self._errors[key] = min_count
            heapq.heappush(heap, (min_count + 1, key))
        if len(self._heap) > 4 * self.capacity + 64:
            self._compact()

    def update_many(self, keys: Iterable[str]) -> None:
        for key in keys:
            self.update(key)

    def _compact(self) -> None:
        self._heap = [(c, k) for k, c in self._counts.items()]
        heapq.heapify(self._heap)

    def count(self, key: str) -> int | None:
        """Estimated count of a monitored key, or None if not monitored."""
        return self._counts.get(key)

    def error(self, key: str) -> int | None:
        return self._errors.get(key)

    def counters(self) -> dict[str, tuple[int, int]]:
        """Snapshot of all monitored items as key -> (count, error)."""
        return {k: (c, self._errors[k]) for k, c in self._counts.items()}

    def top_k(self, k: int) -> list[tuple[str, int, int]]:
        """The k highest-count items as (key, count, error).

        Sorted by count descending; ties broken by ascending key so the
        result is deterministic.  Returns fewer than k entries when fewer
        items are monitored.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        ordered = sorted(self._counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [(key, cnt, self._errors[key]) for key, cnt in ordered[:k]]
