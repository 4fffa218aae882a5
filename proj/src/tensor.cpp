// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace fieldrank {

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const
{
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

} // namespace fieldrank
