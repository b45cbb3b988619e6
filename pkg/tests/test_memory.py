import numpy as np
import pytest

from visionmpc.memory import AugmentedMemory, MemoryEntry, Observation
from visionmpc.vehicle import VehicleState


def entry(t, x=0.0):
    obs = Observation(rays=np.full(4, 1.0), timestamp=t)
    return MemoryEntry(observation=obs, state=VehicleState(x, 0.0, 0.0), timestamp=t)


def test_push_to_empty():
    mem = AugmentedMemory(capacity=3)
    mem.push(entry(0.0))
    assert len(mem) == 1


def test_capacity_eviction():
    mem = AugmentedMemory(capacity=3)
    for t in range(4):
        mem.push(entry(float(t), x=float(t)))
    assert len(mem) == 3
    assert [e.timestamp for e in mem.entries] == [1.0, 2.0, 3.0]


def test_non_monotonic_timestamp_rejected():
    mem = AugmentedMemory(capacity=3)
    mem.push(entry(1.0))
    with pytest.raises(ValueError):
        mem.push(entry(1.0))
    with pytest.raises(ValueError):
        mem.push(entry(0.5))


def test_window_zero_is_empty():
    mem = AugmentedMemory(capacity=3)
    assert mem.window(0) == []
    mem.push(entry(0.0))
    assert mem.window(0) == []


def test_window_tail_in_order():
    mem = AugmentedMemory(capacity=8)
    for t in range(5):
        mem.push(entry(float(t)))
    got = mem.window(3)
    assert [e.timestamp for e in got] == [2.0, 3.0, 4.0]


def test_window_pads_with_oldest():
    mem = AugmentedMemory(capacity=8)
    e1, e2 = entry(1.0), entry(2.0)
    mem.push(e1)
    mem.push(e2)
    got = mem.window(4)
    assert got == [e1, e1, e1, e2]


def test_window_on_empty_raises():
    mem = AugmentedMemory(capacity=2)
    with pytest.raises(ValueError):
        mem.window(1)


def test_window_length_exact_for_random_push_sequences():
    rng = np.random.default_rng(5)
    mem = AugmentedMemory(capacity=6)
    t = 0.0
    for _ in range(40):
        t += float(rng.uniform(0.01, 1.0))
        mem.push(entry(t))
        stamps = [e.timestamp for e in mem.entries]
        assert stamps == sorted(stamps)
        assert len(set(stamps)) == len(stamps)
        assert len(mem) <= 6
        n = int(rng.integers(1, 10))
        assert len(mem.window(n)) == n


def test_entry_timestamp_must_match_observation():
    obs = Observation(rays=np.ones(3), timestamp=1.0)
    with pytest.raises(ValueError):
        MemoryEntry(observation=obs, state=VehicleState(0, 0, 0), timestamp=2.0)


def test_observation_validation():
    with pytest.raises(ValueError):
        Observation(rays=np.array([1.0, 0.0]), timestamp=0.0)
    with pytest.raises(ValueError):
        Observation(rays=np.array([]), timestamp=0.0)
    obs = Observation(rays=np.ones(2), timestamp=0.0)
    with pytest.raises(ValueError):
        obs.rays[0] = 5.0  # read-only snapshot
