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
import json
import math
import logging
import numpy as np
from typing import Any

logger = logging.getLogger(__name__)


def as_vec(x) -> np.ndarray:
    """Coerce a Vec2, array or pair into a float array of shape (2,)"""
    if hasattr(x, "array"):
        return x.array
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {arr.shape}")
    return arr


def as_matrix(a) -> np.ndarray:
    """Coerce a SymMat2 or 2x2 array-like into a float (2, 2) array"""
    if hasattr(a, "matrix"):
        return a.matrix
    arr = np.asarray(a, dtype=float)
    if arr.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {arr.shape}")
    return arr


def unit(i: int) -> np.ndarray:
    """Unit vector e_i for player index i in {1, 2}"""
    if i not in (1, 2):
        raise ValueError(f"player index must be 1 or 2, got {i}")
    e = np.zeros(2)
    e[i - 1] = 1.0
    return e


def other(i: int) -> int:
    return 3 - i


def _json_default(obj: Any):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "value"):  # It's an enum
        return obj.value
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def _finite_tree(obj: Any):
    """Plain JSON tree with every non-finite float replaced by None"""
    if isinstance(obj, dict):
        return {k: _finite_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_tree(v) for v in obj]
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    return _finite_tree(_json_default(obj))


def json_dumps(data, indent: int = 2) -> str:
    # Preserve key order; strict JSON has no NaN or Infinity
    return json.dumps(_finite_tree(data), sort_keys=False, indent=indent, allow_nan=False)


def finite_or_none(value: float):
    """JSON has no infinity; diverged estimates are emitted as null"""
    value = float(value)
    return value if np.isfinite(value) else None
