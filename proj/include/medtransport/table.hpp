#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace medtransport {

/// One row per individual, stored column-wise.
///
/// `s == 1` marks the source environment, `s == 0` the target. `m == 1` means
/// the mediator was observed; `c_obs` holds NaN exactly when `m == 0`.
/// `c_true` is only meaningful when `has_truth` is set (simulated data).
struct ObservationTable {
  std::vector<std::int64_t> id;
  std::vector<std::uint8_t> s;
  std::vector<std::uint8_t> a;
  std::vector<std::uint8_t> w;
  std::vector<double> r;
  std::vector<double> c_true;
  std::vector<double> c_obs;
  std::vector<std::uint8_t> m;
  std::vector<std::uint8_t> y;
  bool has_truth = false;

  std::size_t size() const noexcept { return s.size(); }

  void reserve(std::size_t n);
  void push_back(std::int64_t row_id, int s_, int a_, int w_, double r_, double c_true_,
                 bool observed, int y_);

  /// Rows selected by `rows`, in that order (used by the bootstrap).
  ObservationTable subset(std::span<const std::size_t> rows) const;

  /// Mediator value to use for analysis on row `i` (the observed proxy).
  double mediator(std::size_t i) const noexcept { return c_obs[i]; }
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Number of rows with s == env and w == group (group < 0 means any group).
std::size_t count_stratum(const ObservationTable& t, int env, int group);

}  // namespace medtransport
