#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "medtransport/table.hpp"

namespace medtransport::csv {

struct LoadResult {
  ObservationTable table;
  std::vector<std::string> warnings;
};

/// Strata with fewer rows than this are rejected; fewer than kWarnRows warn.
inline constexpr std::size_t kMinStratumRows = 10;
inline constexpr std::size_t kWarnStratumRows = 50;

/// Reads columns S, A, W, R, C, Y (header matched case-insensitively), plus
/// optional M (observation override), id and C_true. An empty C cell marks
/// the mediator missing.
LoadResult load_csv(const std::filesystem::path& path);
LoadResult parse_csv(std::istream& in, const std::string& source_name = "<stream>");

/// Writes id,S,A,W,R,C,Y,M (and C_true when keep_truth) with shortest
/// round-trip number formatting.
void write_csv(std::ostream& out, const ObservationTable& t, bool keep_truth);

std::string format_double(double v);

}  // namespace medtransport::csv
