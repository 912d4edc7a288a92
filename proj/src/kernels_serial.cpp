#include <cmath>
#include <numbers>

#include "medtransport/kernels.hpp"
#include "medtransport/random.hpp"

namespace medtransport::kernels::serial {

void gaussian_mixture_density(std::span<const double> x, std::span<const double> means, double sd,
                              std::span<double> out) {
  const double inv_sd = 1.0 / sd;
  const double norm = inv_sd * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double acc = 0.0;
    for (double mu : means) {
      const double z = (x[i] - mu) * inv_sd;
      acc += std::exp(-0.5 * z * z);
    }
    out[i] = norm * acc / static_cast<double>(means.size());
  }
}

void marginalize_logistic(std::span<const double> base, double slope,
                          std::span<const double> support, std::span<const double> mass,
                          std::span<double> out) {
  for (std::size_t i = 0; i < base.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
      acc += mass[k] * logistic(base[i] + slope * support[k]);
    }
    out[i] = acc;
  }
}

}  // namespace medtransport::kernels::serial
