#include "medtransport/table.hpp"

namespace medtransport {

void ObservationTable::reserve(std::size_t n) {
  id.reserve(n);
  s.reserve(n);
  a.reserve(n);
  w.reserve(n);
  r.reserve(n);
  c_true.reserve(n);
  c_obs.reserve(n);
  m.reserve(n);
  y.reserve(n);
}

void ObservationTable::push_back(std::int64_t row_id, int s_, int a_, int w_, double r_,
                                 double c_true_, bool observed, int y_) {
  id.push_back(row_id);
  s.push_back(static_cast<std::uint8_t>(s_));
  a.push_back(static_cast<std::uint8_t>(a_));
  w.push_back(static_cast<std::uint8_t>(w_));
  r.push_back(r_);
  c_true.push_back(c_true_);
  c_obs.push_back(observed ? c_true_ : kMissing);
  m.push_back(observed ? 1 : 0);
  y.push_back(static_cast<std::uint8_t>(y_));
}

ObservationTable ObservationTable::subset(std::span<const std::size_t> rows) const {
  ObservationTable out;
  out.has_truth = has_truth;
  out.reserve(rows.size());
  for (std::size_t i : rows) {
    out.id.push_back(id[i]);
    out.s.push_back(s[i]);
    out.a.push_back(a[i]);
    out.w.push_back(w[i]);
    out.r.push_back(r[i]);
    out.c_true.push_back(c_true[i]);
    out.c_obs.push_back(c_obs[i]);
    out.m.push_back(m[i]);
    out.y.push_back(y[i]);
  }
  return out;
}

std::size_t count_stratum(const ObservationTable& t, int env, int group) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.s[i] == env && (group < 0 || t.w[i] == group)) ++n;
  }
  return n;
}

}  // namespace medtransport
