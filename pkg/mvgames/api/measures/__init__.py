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
from .models import Vec2, SymMat2, GaussianMeasure, EmpiricalMeasure, MeasureHandle, MeasureKind, measure_from_dict
from .core import (moments, mean_vec, second_moment, quad_moment, lin_moment, symmetrize, sqrtm_psd,
                   w2_gaussian, gaussian_from_empirical, mixture_moments, moment_gaussian,
                   affine_product_moment, random_gaussian)
