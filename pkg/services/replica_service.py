import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple, TypeVar

import numpy as np

from cascade_types.errors import DegenerateRealizationError, DegenerateSampleError, ExcessiveResamplingError
from config.settings import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Independent streams per ensemble so finite-n and limit runs never share draws
STREAM_FINITE = 0
STREAM_LIMIT = 1
STREAM_STABLE = 2
STREAM_SUPERPOSE = 3

_RETRYABLE = (DegenerateRealizationError, DegenerateSampleError)


class ReplicaService:
    def __init__(self):
        self.threads = settings.CASCADE_THREADS
        self.max_retries = 100

    @staticmethod
    def spawn_generators(seed: int, count: int, stream: int = STREAM_FINITE, substream: int = 0) -> List[np.random.Generator]:
        """One generator per replica, fixed by (seed, stream, substream, replica index)"""
        children = np.random.SeedSequence(entropy=seed, spawn_key=(stream, substream)).spawn(count)
        return [np.random.default_rng(child) for child in children]

    def _with_retries(self, job: Callable[[int, np.random.Generator], T]) -> Callable[[int, np.random.Generator], Tuple[T, int]]:
        def run(index: int, rng: np.random.Generator) -> Tuple[T, int]:
            discarded = 0
            while True:
                try:
                    return job(index, rng), discarded
                except _RETRYABLE as e:
                    discarded += 1
                    if discarded > self.max_retries:
                        raise ExcessiveResamplingError(f"replica {index} stayed degenerate after {discarded} draws: {e}") from e

        return run

    async def run(
        self,
        job: Callable[[int, np.random.Generator], T],
        count: int,
        seed: int,
        stream: int = STREAM_FINITE,
        substream: int = 0,
        threads: Optional[int] = None,
        label: str = "replicas",
    ) -> Tuple[List[T], int]:
        """Run `count` replicas on a thread pool; results come back in replica order.

        Degenerate draws are redrawn from the replica's own stream, so the result
        depends only on (seed, stream, index) and never on the thread count.
        Returns the results and the number of discarded degenerate draws.
        """
        if count < 1:
            raise ValueError(f"replica count must be positive, got {count}")
        threads = threads or self.threads
        generators = self.spawn_generators(seed, count, stream, substream)
        wrapped = self._with_retries(job)

        logger.info(f"🚀 Running {count} {label} on {threads} thread(s)...")
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [loop.run_in_executor(pool, wrapped, index, rng) for index, rng in enumerate(generators)]
            outcomes = await asyncio.gather(*futures)

        discarded = sum(extra for _, extra in outcomes)
        if discarded:
            logger.warning(f"⚠️ Redrew {discarded} degenerate {label}")
        logger.info(f"✓ Finished {count} {label}")
        return [result for result, _ in outcomes], discarded

# Global replica service instance
replica_service = ReplicaService()
