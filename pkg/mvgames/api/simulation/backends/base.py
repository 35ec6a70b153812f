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
import logging
import numpy as np
from abc import ABC, abstractmethod

logger = logging.getLogger(__name__)


class ParticleBackend(ABC):
    """
    Executes the update phase of an Euler-Maruyama step on a coordinate-major (2, N) state array.
    Reductions are done by the caller before advance() is invoked.
    """

    @abstractmethod
    def __init__(self, **kwargs): ...

    @abstractmethod
    def advance(self, x: np.ndarray, drift: np.ndarray, noise: np.ndarray, dt: float) -> None: ...

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def euler_update(x: np.ndarray, drift: np.ndarray, noise: np.ndarray, dt: float, sqrt_dt: float) -> None:
    """x += drift dt + sqrt(dt) noise, elementwise and in place"""
    x += drift * dt + noise * sqrt_dt
