#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "jm/util.hpp"

namespace jm {

// Minimal CSV table: header + string cells. Numeric parsing is done at the
// call site so error messages can carry file/line context.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // row i, column j
  std::vector<std::size_t> line_numbers;       // 1-based source line of each row

  int column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }

  int require_column(const std::string& name) const {
    const int j = column(name);
    if (j < 0) throw DataError(path + ": missing required column '" + name + "'");
    return j;
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, ',');
    for (auto& c : cells) c = trim(c);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, got " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw DataError(path + ": empty file (no header)");
  return t;
}

inline double parse_double(const CsvTable& t, std::size_t row, int col) {
  const std::string& s = t.rows[row][col];
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError(t.path + ":" + std::to_string(t.line_numbers[row]) + ": cannot parse '" + s + "' in column '" +
                    t.header[col] + "' as a number");
  }
}

inline std::optional<double> parse_optional_double(const CsvTable& t, std::size_t row, int col) {
  if (t.rows[row][col].empty()) return std::nullopt;
  return parse_double(t, row, col);
}

inline int parse_binary(const CsvTable& t, std::size_t row, int col) {
  const std::string& s = t.rows[row][col];
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw DataError(t.path + ":" + std::to_string(t.line_numbers[row]) + ": column '" + t.header[col] +
                  "' must be 0 or 1, got '" + s + "'");
}

// Round-trip safe double formatting.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw DataError("cannot open file for writing: " + path);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j) out_ << ',';
      out_ << cells[j];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace jm
