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
import pytest
import numpy as np
from mvgames.api.util import as_vec, as_matrix, unit, other, json_dumps, finite_or_none
from mvgames.api.measures.models import Vec2, SymMat2
from mvgames.api.games.models import ModelTag


class TestCoercion:
    """Test vector and matrix coercion helpers"""

    def test_as_vec(self):
        assert np.array_equal(as_vec(Vec2(1.0, 2.0)), [1.0, 2.0])
        assert np.array_equal(as_vec([[3.0], [4.0]]), [3.0, 4.0])
        with pytest.raises(ValueError):
            as_vec([1.0, 2.0, 3.0])

    def test_as_matrix(self):
        assert np.array_equal(as_matrix(SymMat2(1.0, 2.0, 0.5)), [[1.0, 0.5], [0.5, 2.0]])
        with pytest.raises(ValueError):
            as_matrix(np.eye(3))

    def test_unit_and_other(self):
        assert np.array_equal(unit(2), [0.0, 1.0])
        assert other(1) == 2 and other(2) == 1
        with pytest.raises(ValueError):
            unit(0)


class TestJson:
    """Test JSON serialization helpers"""

    def test_numpy_and_enum_values(self):
        data = {"b": np.array([1.0, 2.0]), "a": np.float64(0.5), "model": ModelTag.EX2_ETA, "v": Vec2(1.0, 0.0)}
        text = json_dumps(data)
        assert list(json.loads(text)) == ["b", "a", "model", "v"]
        assert json.loads(text)["model"] == "ex2_eta"
        assert json.loads(text)["v"] == [1.0, 0.0]

    def test_unserializable(self):
        with pytest.raises(TypeError):
            json_dumps({"x": object()})

    def test_finite_or_none(self):
        assert finite_or_none(1.5) == 1.5
        assert finite_or_none(math.inf) is None
        assert finite_or_none(math.nan) is None

    def test_non_finite_values_become_null(self):
        data = {"se": np.array([math.nan, 0.1]), "bound": math.inf, "nested": [{"t": -math.inf}], "ok": 2.0}
        text = json_dumps(data)
        assert "NaN" not in text and "Infinity" not in text
        assert json.loads(text) == {"se": [None, 0.1], "bound": None, "nested": [{"t": None}], "ok": 2.0}
