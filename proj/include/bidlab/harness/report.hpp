#pragma once

// Deterministic CSV/report export. All floating values are formatted with a
// fixed precision so re-exports are byte-identical.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "bidlab/auction/types.hpp"

namespace bidlab::harness {

inline std::string fmt_num(double v, int precision = 6) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(precision) << v;
  auto s = ss.str();
  if (s == "-0." + std::string(std::size_t(precision), '0'))
    s.erase(s.begin());  // normalize negative zero
  return s;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size())
      throw auction::InputError("csv: row width does not match header");
    rows.push_back(std::move(row));
  }
};

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw auction::InputError("csv: cannot write " + path);
  auto join = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    return line;
  };
  out << join(t.header) << '\n';
  for (auto& r : t.rows) out << join(r) << '\n';
}

// Provenance line stamped into every report: tool version, config hash, seed.
inline std::string provenance(const std::string& config_hash,
                              std::uint64_t seed) {
  return "bidlab-1.0 config=" + config_hash + " seed=" + std::to_string(seed);
}

inline void write_summary(const std::string& path,
                          const std::string& provenance_line,
                          const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw auction::InputError("report: cannot write " + path);
  out << provenance_line << '\n';
  for (auto& l : lines) out << l << '\n';
}

}  // namespace bidlab::harness
