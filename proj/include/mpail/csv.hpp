#pragma once

// Plain numeric CSV: one header line of column names, LF line endings,
// doubles printed in shortest form that parses back to the same value.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mpail/common.hpp"

namespace mpail::csv {

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> row_lines;  // 1-based source line of each row

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<double> values(const std::string& name) const {
    int c = column(name);
    if (c < 0) throw Error("unknown column '" + name + "'");
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[static_cast<std::size_t>(c)]);
    return v;
  }
};

/// Parses a numeric table. Every data row must have as many fields as the
/// header and every field must parse fully as a number (nan/inf included;
/// callers decide whether those are acceptable).
inline Table parse(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty file: missing header", 1);
  ++lineno;
  for (auto& h : split(line)) t.header.push_back(trim(h));
  if (t.header.empty() || t.header[0].empty()) throw ParseError("malformed header", lineno);
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (fields.size() != t.header.size())
      throw ParseError("expected " + std::to_string(t.header.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       lineno);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      std::string s = trim(f);
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size())
        throw ParseError("cannot parse number '" + s + "'", lineno);
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
    t.row_lines.push_back(lineno);
  }
  return t;
}

inline Table read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  return parse(f);
}

/// Buffered writer; flushes the header immediately so an empty table still
/// yields a valid file.
class Writer {
 public:
  Writer(const std::string& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot write " + path);
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
    out_.flush();
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
    out_ << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace mpail::csv
