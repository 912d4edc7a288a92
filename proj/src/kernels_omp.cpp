#include <cmath>
#include <cstdlib>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "medtransport/kernels.hpp"
#include "medtransport/random.hpp"

namespace medtransport::kernels {

namespace {

int g_threads = -1;

int threads_from_env() {
  const char* env = std::getenv("MEDTRANSPORT_THREADS");
  if (env == nullptr) return 0;
  const int n = std::atoi(env);
  return n < 0 ? 0 : n;
}

}  // namespace

int configured_threads() {
  if (g_threads < 0) set_threads(threads_from_env());
  return g_threads;
}

void set_threads(int n) {
  g_threads = n < 0 ? 0 : n;
#ifdef _OPENMP
  if (g_threads > 0) omp_set_num_threads(g_threads);
#endif
}

namespace omp {

void gaussian_mixture_density(std::span<const double> x, std::span<const double> means, double sd,
                              std::span<double> out) {
  configured_threads();
  const double inv_sd = 1.0 / sd;
  const double norm = inv_sd * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const double* mu = means.data();
  const std::size_t k_count = means.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const double xi = x[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < k_count; ++k) {
      const double z = (xi - mu[k]) * inv_sd;
      acc += std::exp(-0.5 * z * z);
    }
    out[static_cast<std::size_t>(i)] = norm * acc / static_cast<double>(k_count);
  }
}

void marginalize_logistic(std::span<const double> base, double slope,
                          std::span<const double> support, std::span<const double> mass,
                          std::span<double> out) {
  configured_threads();
  const auto n = static_cast<std::ptrdiff_t>(base.size());
  const std::size_t k_count = support.size();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double b = base[static_cast<std::size_t>(i)];
    double acc = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      acc += mass[k] * logistic(b + slope * support[k]);
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
}

}  // namespace omp
}  // namespace medtransport::kernels
