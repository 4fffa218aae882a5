// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

namespace fieldrank {

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> x);

/// Pearson correlation; 0 when either stream's variance is below 1e-12.
double pearson(std::span<const double> x, std::span<const double> y);

} // namespace fieldrank
