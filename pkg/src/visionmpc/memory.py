"""Time-synchronized buffer of past observations and vehicle states."""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .vehicle import VehicleState


@dataclass(frozen=True)
class Observation:
    """Ray-distance scan: one distance per angular bin, plus a timestamp."""

    rays: np.ndarray
    timestamp: float

    def __post_init__(self):
        rays = np.asarray(self.rays, dtype=float)
        if rays.ndim != 1 or rays.size == 0:
            raise ValueError("rays must be a non-empty 1-D vector")
        if not np.all(np.isfinite(rays)) or np.any(rays <= 0.0):
            raise ValueError("ray distances must be finite and positive")
        rays = rays.copy()
        rays.setflags(write=False)
        object.__setattr__(self, "rays", rays)
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


@dataclass(frozen=True)
class MemoryEntry:
    """Synchronized (observation, state) pair; timestamps must agree."""

    observation: Observation
    state: VehicleState
    timestamp: float

    def __post_init__(self):
        if self.observation.timestamp != self.timestamp:
            raise ValueError(
                "entry timestamp does not match its observation "
                f"({self.timestamp} vs {self.observation.timestamp})"
            )


@dataclass
class AugmentedMemory:
    """Bounded history over the past interval, strictly increasing timestamps.

    Single-writer structure; entries handed out by window() are immutable
    snapshots and may cross threads.
    """

    capacity: int
    _entries: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[MemoryEntry, ...]:
        return tuple(self._entries)

    def push(self, entry: MemoryEntry) -> "AugmentedMemory":
        """Append an entry; evicts the oldest when over capacity.

        Timestamps must strictly increase; a stale or duplicate timestamp
        is rejected.
        """
        if self._entries and entry.timestamp <= self._entries[-1].timestamp:
            raise ValueError(
                f"non-monotonic timestamp {entry.timestamp} "
                f"(latest stored: {self._entries[-1].timestamp})"
            )
        self._entries.append(entry)
        while len(self._entries) > self.capacity:
            self._entries.popleft()
        return self

    def window(self, n: int) -> list[MemoryEntry]:
        """Last n entries, oldest first.

        When fewer than n entries exist, the oldest one is repeated at the
        front so the result has length exactly n. n = 0 returns [].
        """
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return []
        if not self._entries:
            raise ValueError("window() on an empty memory")
        tail = list(self._entries)[-n:]
        pad = n - len(tail)
        return [tail[0]] * pad + tail
