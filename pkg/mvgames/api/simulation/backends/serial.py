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
from .base import ParticleBackend, euler_update

logger = logging.getLogger(__name__)


class SerialBackend(ParticleBackend):
    def __init__(self, **kwargs):
        pass

    def advance(self, x: np.ndarray, drift: np.ndarray, noise: np.ndarray, dt: float) -> None:
        euler_update(x, drift, noise, dt, math.sqrt(dt))
