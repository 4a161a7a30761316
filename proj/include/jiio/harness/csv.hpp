#pragma once

// Trace and metrics CSV export. Floats use 17 significant digits so a parse
// of the file reproduces the values bit for bit.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/solvers.hpp"

namespace jiio {

inline constexpr const char* kTraceHeader = "iter,f_evals,vjp_evals,residual,kkt_norm,cost,wall_ns";

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw Error(ErrorCode::kParseError, "not a number: '" + s + "'");
  return v;
}

/// Rows of the trace CSV. The wall-clock column is 0 unless `timing` is set,
/// which keeps files byte-identical across runs.
inline std::string trace_csv(const SolverTrace& trace, bool timing = false) {
  std::string out = kTraceHeader;
  out += '\n';
  char buf[64];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%llu,%llu,", r.iter, static_cast<unsigned long long>(r.f_evals),
                  static_cast<unsigned long long>(r.vjp_evals));
    out += buf;
    out += format_double(r.residual) + ',' + format_double(r.kkt_norm) + ',' + format_double(r.cost) + ',';
    out += std::to_string(timing ? r.wall_ns : 0);
    out += '\n';
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIoError, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorCode::kIoError, "write failed for " + path);
}

inline void emit_trace_csv(const SolverTrace& trace, const std::string& path, bool timing = false) {
  write_text(path, trace_csv(trace, timing));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

/// Inverse of trace_csv (rows only; iterates are not stored).
inline SolverTrace parse_trace_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) throw Error(ErrorCode::kParseError, "bad trace CSV header");
  SolverTrace t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 7) throw ParseError(lineno, "trace CSV row has " + std::to_string(c.size()) + " cells");
    TraceRow r;
    r.iter = std::stoull(c[0]);
    r.f_evals = std::stoull(c[1]);
    r.vjp_evals = std::stoull(c[2]);
    r.residual = parse_double(c[3]);
    r.kkt_norm = parse_double(c[4]);
    r.cost = parse_double(c[5]);
    r.wall_ns = std::stoll(c[6]);
    t.rows.push_back(r);
  }
  return t;
}

/// A named-column table of numbers; NaN cells are written as NA.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) {
    check_same_size(row.size(), columns.size(), "metrics row");
    rows.push_back(std::move(row));
  }
};

inline std::string metrics_csv(const MetricsTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += std::isnan(r[i]) ? std::string("NA") : format_double(r[i]);
    }
    out += '\n';
  }
  return out;
}

inline void emit_metrics_csv(const MetricsTable& t, const std::string& path) { write_text(path, metrics_csv(t)); }

}  // namespace jiio
