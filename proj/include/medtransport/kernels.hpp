#pragma once

#include <span>

// Row-parallel numeric kernels. Every kernel exists twice: a plain serial
// reference (`serial::`) that the tests check against, and an OpenMP version
// (`omp::`) used by the estimators. Both write one output per row and never
// reduce across rows, so results do not depend on the thread count.

namespace medtransport::kernels {

namespace serial {

/// out[i] = mean_k N(x[i]; means[k], sd)
void gaussian_mixture_density(std::span<const double> x, std::span<const double> means, double sd,
                              std::span<double> out);

/// out[i] = sum_k mass[k] * logistic(base[i] + slope * support[k])
void marginalize_logistic(std::span<const double> base, double slope,
                          std::span<const double> support, std::span<const double> mass,
                          std::span<double> out);

}  // namespace serial

namespace omp {

void gaussian_mixture_density(std::span<const double> x, std::span<const double> means, double sd,
                              std::span<double> out);

void marginalize_logistic(std::span<const double> base, double slope,
                          std::span<const double> support, std::span<const double> mass,
                          std::span<double> out);

}  // namespace omp

/// Threads used by the OpenMP kernels and the bootstrap. Reads
/// MEDTRANSPORT_THREADS once (0 or unset = runtime default).
int configured_threads();
void set_threads(int n);

}  // namespace medtransport::kernels
