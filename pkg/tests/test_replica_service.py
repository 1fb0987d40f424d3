from collections import defaultdict

import numpy as np
import pytest

from cascade_types.errors import DegenerateRealizationError, DegenerateSampleError, ExcessiveResamplingError
from services.replica_service import STREAM_FINITE, STREAM_LIMIT, replica_service


def draw(index, rng):
    return index, float(rng.random())


async def test_results_come_back_in_replica_order():
    results, discarded = await replica_service.run(draw, 12, seed=3, threads=4)
    assert [index for index, _ in results] == list(range(12))
    assert discarded == 0


async def test_thread_count_does_not_change_results():
    serial, _ = await replica_service.run(draw, 10, seed=42, threads=1)
    parallel, _ = await replica_service.run(draw, 10, seed=42, threads=4)
    assert serial == parallel


async def test_streams_and_substreams_are_independent():
    finite, _ = await replica_service.run(draw, 5, seed=42, stream=STREAM_FINITE)
    limit, _ = await replica_service.run(draw, 5, seed=42, stream=STREAM_LIMIT)
    other_depth, _ = await replica_service.run(draw, 5, seed=42, stream=STREAM_FINITE, substream=9)
    assert finite != limit
    assert finite != other_depth


def test_generators_are_fixed_by_seed_and_stream():
    a = [rng.random() for rng in replica_service.spawn_generators(7, 3, STREAM_LIMIT, 2)]
    b = [rng.random() for rng in replica_service.spawn_generators(7, 3, STREAM_LIMIT, 2)]
    assert a == b
    assert len(set(a)) == 3


async def test_degenerate_draws_are_redrawn_and_counted():
    calls = defaultdict(int)

    def flaky(index, rng):
        calls[index] += 1
        if index == 1 and calls[index] <= 2:
            raise DegenerateRealizationError("D_n <= 0")
        if index == 3 and calls[index] == 1:
            raise DegenerateSampleError("I(root) = 0")
        return float(rng.random())

    results, discarded = await replica_service.run(flaky, 5, seed=1, threads=2)
    assert len(results) == 5
    assert discarded == 3


async def test_retry_limit(mocker):
    mocker.patch.object(replica_service, "max_retries", 3)

    def hopeless(index, rng):
        raise DegenerateRealizationError("always degenerate")

    with pytest.raises(ExcessiveResamplingError):
        await replica_service.run(hopeless, 2, seed=1)


async def test_other_errors_propagate():
    def broken(index, rng):
        raise ValueError("bad input")

    with pytest.raises(ValueError):
        await replica_service.run(broken, 2, seed=1)


async def test_count_must_be_positive():
    with pytest.raises(ValueError):
        await replica_service.run(draw, 0, seed=1)


async def test_redraws_continue_on_the_replica_stream():
    attempts = defaultdict(list)

    def record(index, rng):
        value = float(rng.random())
        attempts[index].append(value)
        if len(attempts[index]) == 1:
            raise DegenerateSampleError("first draw is degenerate")
        return value

    results, _ = await replica_service.run(record, 2, seed=5)
    expected = [np.random.default_rng(child).random(2)[1] for child in np.random.SeedSequence(5, spawn_key=(0, 0)).spawn(2)]
    assert results == expected
