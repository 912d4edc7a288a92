#include "medtransport/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "medtransport/error.hpp"

namespace medtransport::csv {

namespace {

std::string lower(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

LoadResult parse_csv(std::istream& in, const std::string& source_name) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("cli", source_name + ": empty file (header expected)");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const std::vector<std::string> header = split(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[lower(header[j])] = j;

  const char* required[] = {"S", "A", "W", "R", "C", "Y"};
  for (const char* name : required)
    if (!col.count(lower(name))) throw DataError("cli", "missing required column: " + std::string(name));
  const std::size_t js = col["s"], ja = col["a"], jw = col["w"], jr = col["r"], jc = col["c"], jy = col["y"];
  constexpr std::size_t absent = std::string::npos;
  const std::size_t jm = col.count("m") ? col["m"] : absent;
  const std::size_t jid = col.count("id") ? col["id"] : absent;
  const std::size_t jtruth = col.count("c_true") ? col["c_true"] : absent;

  LoadResult res;
  ObservationTable& t = res.table;
  t.has_truth = jtruth != absent;
  std::size_t line_no = 1;
  std::int64_t position = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line);
    const std::string where = source_name + " line " + std::to_string(line_no);
    if (cells.size() < header.size())
      throw DataError("cli", where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(cells.size()));
    auto binary = [&](std::size_t j, const char* name) {
      const auto v = parse_number(cells[j]);
      if (!v || (*v != 0.0 && *v != 1.0))
        throw DataError("cli", where + ": column " + name + " must be 0 or 1, got '" + cells[j] + "'");
      return static_cast<int>(*v);
    };
    auto real = [&](std::size_t j, const char* name) {
      const auto v = parse_number(cells[j]);
      if (!v) throw DataError("cli", where + ": column " + name + " is not a number: '" + cells[j] + "'");
      return *v;
    };
    const int s = binary(js, "S");
    const int a = binary(ja, "A");
    const int w = binary(jw, "W");
    const double r = real(jr, "R");
    const int y = binary(jy, "Y");
    bool observed = !cells[jc].empty();
    if (jm != absent) observed = binary(jm, "M") == 1;
    if (observed && cells[jc].empty())
      throw DataError("cli", where + ": M = 1 but C is empty");
    const double c = observed ? real(jc, "C") : kMissing;
    const double c_true = jtruth != absent ? real(jtruth, "C_true") : c;
    std::int64_t id = position;
    if (jid != absent) id = static_cast<std::int64_t>(real(jid, "id"));
    t.push_back(id, s, a, w, r, observed ? c : c_true, observed, y);
    if (observed) t.c_obs.back() = c;
    ++position;
  }

  for (int s = 0; s < 2; ++s) {
    for (int w = 0; w < 2; ++w) {
      const std::size_t n = count_stratum(t, s, w);
      const std::string label = "stratum S=" + std::to_string(s) + ", W=" + std::to_string(w);
      if (n < kMinStratumRows)
        throw DataError("cli", source_name + ": " + label + " has " + std::to_string(n) +
                                   " rows (minimum " + std::to_string(kMinStratumRows) + ")");
      if (n < kWarnStratumRows)
        res.warnings.push_back(label + " has only " + std::to_string(n) + " rows");
    }
  }
  return res;
}

LoadResult load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cli", "cannot open input file: " + path.string());
  return parse_csv(in, path.string());
}

void write_csv(std::ostream& out, const ObservationTable& t, bool keep_truth) {
  out << "id,S,A,W,R,C,Y,M";
  if (keep_truth) out << ",C_true";
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << t.id[i] << ',' << int(t.s[i]) << ',' << int(t.a[i]) << ',' << int(t.w[i]) << ','
        << format_double(t.r[i]) << ',';
    if (t.m[i]) out << format_double(t.c_obs[i]);
    out << ',' << int(t.y[i]) << ',' << int(t.m[i]);
    if (keep_truth) out << ',' << format_double(t.c_true[i]);
    out << '\n';
  }
}

}  // namespace medtransport::csv
