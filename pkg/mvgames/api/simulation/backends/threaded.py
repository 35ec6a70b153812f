#
# Copyright 2025 University of Southern California
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
import math
import logging
import numpy as np
from concurrent.futures import ThreadPoolExecutor
from .base import ParticleBackend, euler_update

logger = logging.getLogger(__name__)


class ThreadedBackend(ParticleBackend):
    """
    Splits the particle index range into contiguous chunks updated on a thread pool.
    Updates are elementwise, so results are bitwise identical to the serial backend.
    """

    def __init__(self, workers: int = 4, min_chunk: int = 1024, **kwargs):
        self.workers = max(int(workers), 1)
        self.min_chunk = max(int(min_chunk), 1)
        self._pool = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="mvgames-particles")
        logger.debug(f"Threaded particle backend started with {self.workers} workers")

    def _chunks(self, n: int):
        n_chunks = max(min(self.workers, n // self.min_chunk), 1)
        bounds = np.linspace(0, n, n_chunks + 1).astype(int)
        return [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def advance(self, x: np.ndarray, drift: np.ndarray, noise: np.ndarray, dt: float) -> None:
        sqrt_dt = math.sqrt(dt)
        chunks = self._chunks(x.shape[1])
        if len(chunks) == 1:
            euler_update(x, drift, noise, dt, sqrt_dt)
            return
        futures = [self._pool.submit(euler_update, x[:, sl], drift[:, sl], noise[:, sl], dt, sqrt_dt)
                   for sl in chunks]
        # barrier before the next reduction phase
        for future in futures:
            future.result()

    def close(self) -> None:
        self._pool.shutdown(wait=True)
