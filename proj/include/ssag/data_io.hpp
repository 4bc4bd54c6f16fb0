#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ssag/run_record.hpp"
#include "ssag/types.hpp"

namespace ssag {

struct SparseRow {
  std::vector<int> idx;  // 0-based, strictly increasing
  std::vector<double> val;
};

struct SparseDataset {
  int n_samples = 0;
  int n_features = 0;
  std::vector<double> labels;  // normalized to +/-1
  std::vector<SparseRow> rows;

  Matrix to_dense() const {
    Matrix out = Matrix::Zero(n_samples, n_features);
    for (int i = 0; i < n_samples; ++i)
      for (std::size_t j = 0; j < rows[static_cast<std::size_t>(i)].idx.size(); ++j)
        out(i, rows[static_cast<std::size_t>(i)].idx[j]) = rows[static_cast<std::size_t>(i)].val[j];
    return out;
  }

  Vector labels_vector() const {
    Vector out(n_samples);
    for (int i = 0; i < n_samples; ++i) out[i] = labels[static_cast<std::size_t>(i)];
    return out;
  }
};

namespace detail {

inline std::runtime_error parse_error(const std::string& path, std::size_t line_no,
                                      const std::string& what) {
  std::ostringstream msg;
  msg << path << ":" << line_no << ": " << what;
  return std::runtime_error(msg.str());
}

inline bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + tok.size() && tok.size() > 0;
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

// LIBSVM sparse classification format: "label idx:val idx:val ..." with
// 1-based strictly increasing indices. Labels in {0, 1} are remapped to
// {-1, +1}. Feature count is the max index seen unless overridden; a datum
// beyond the override is an error.
inline SparseDataset load_libsvm(const std::string& path, int n_features_override = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_libsvm: cannot open " + path);
  SparseDataset ds;
  int max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank line
    double label;
    if (!detail::parse_double(tok, label))
      throw detail::parse_error(path, line_no, "unparsable label '" + tok + "'");
    if (label == 0.0) label = -1.0;
    if (label != 1.0 && label != -1.0)
      throw detail::parse_error(path, line_no, "label must be one of {-1, 0, +1}");
    SparseRow row;
    int prev_index = 0;
    while (ls >> tok) {
      const std::size_t colon = tok.find(':');
      if (colon == std::string::npos)
        throw detail::parse_error(path, line_no, "expected idx:val, got '" + tok + "'");
      double idx_raw, value;
      if (!detail::parse_double(tok.substr(0, colon), idx_raw) || idx_raw != std::floor(idx_raw) ||
          idx_raw < 1.0)
        throw detail::parse_error(path, line_no, "bad feature index in '" + tok + "'");
      if (!detail::parse_double(tok.substr(colon + 1), value))
        throw detail::parse_error(path, line_no, "bad feature value in '" + tok + "'");
      const int index = static_cast<int>(idx_raw);
      if (index <= prev_index)
        throw detail::parse_error(path, line_no, "feature indices must be strictly increasing");
      if (n_features_override > 0 && index > n_features_override)
        throw detail::parse_error(path, line_no, "feature index exceeds declared dimension");
      prev_index = index;
      row.idx.push_back(index - 1);
      row.val.push_back(value);
      max_index = std::max(max_index, index);
    }
    ds.labels.push_back(label);
    ds.rows.push_back(std::move(row));
  }
  if (ds.rows.empty()) throw std::runtime_error("load_libsvm: " + path + " has no data");
  ds.n_samples = static_cast<int>(ds.rows.size());
  ds.n_features = n_features_override > 0 ? n_features_override : max_index;
  return ds;
}

struct ReturnsTable {
  std::vector<std::string> dates;  // populated only when a date column exists
  Matrix returns;                  // days x assets
  int dropped_rows = 0;
};

// Rectangular CSV of return ratios, one day per row. Rows containing an
// unparsable numeric cell are dropped (and counted); ragged rows are errors.
inline ReturnsTable load_returns_csv(const std::string& path, bool has_header = false,
                                     bool date_column = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_returns_csv: cannot open " + path);
  ReturnsTable table;
  std::vector<std::vector<double>> kept;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(detail::trim(cell));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw detail::parse_error(path, line_no, "ragged row: expected " + std::to_string(width) +
                                                   " cells, got " + std::to_string(cells.size()));
    const std::size_t first = date_column ? 1 : 0;
    std::vector<double> row(cells.size() - first);
    bool ok = true;
    for (std::size_t j = first; j < cells.size(); ++j) {
      if (!detail::parse_double(cells[j], row[j - first])) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      ++table.dropped_rows;
      continue;
    }
    if (date_column) table.dates.push_back(cells[0]);
    kept.push_back(std::move(row));
  }
  if (kept.empty()) throw std::runtime_error("load_returns_csv: " + path + " has no numeric rows");
  table.returns.resize(static_cast<Index>(kept.size()), static_cast<Index>(kept[0].size()));
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (std::size_t j = 0; j < kept[i].size(); ++j)
      table.returns(static_cast<Index>(i), static_cast<Index>(j)) = kept[i][j];
  return table;
}

// Seeded shuffle then split; the two parts are disjoint and exhaustive.
inline std::pair<SparseDataset, SparseDataset> split_train_test(const SparseDataset& ds,
                                                                double fraction,
                                                                std::uint64_t seed) {
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw std::invalid_argument("split_train_test: fraction must lie in (0, 1)");
  const int n = ds.n_samples;
  const int n_train = static_cast<int>(std::floor(fraction * n));
  if (n_train < 1 || n_train >= n)
    throw std::invalid_argument("split_train_test: degenerate split sizes");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto take = [&](int begin, int end) {
    SparseDataset part;
    part.n_features = ds.n_features;
    part.n_samples = end - begin;
    for (int i = begin; i < end; ++i) {
      part.labels.push_back(ds.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
      part.rows.push_back(ds.rows[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    return part;
  };
  return {take(0, n_train), take(n_train, n)};
}

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kRunRecordHeader = "iter,sfo_calls,cpu_seconds,objective,gap,accuracy";

// Streams one row per logged point; blank cells for absent optional fields.
// Values round-trip losslessly at 17 significant digits.
inline void write_run_record(const RunRecord& record, std::ostream& out) {
  out << kRunRecordHeader << '\n';
  for (const RunPoint& p : record.points) {
    out << p.iter << ',' << p.sfo_calls << ',';
    if (p.cpu_seconds) out << detail::format_double(*p.cpu_seconds);
    out << ',' << detail::format_double(p.objective) << ',';
    if (p.gap) out << detail::format_double(*p.gap);
    out << ',';
    if (p.accuracy) out << detail::format_double(*p.accuracy);
    out << '\n';
  }
}

inline void write_run_record(const RunRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_run_record: cannot open " + path);
  write_run_record(record, out);
  if (!out) throw std::runtime_error("write_run_record: write failed for " + path);
}

inline RunRecord read_run_record(std::istream& in, const std::string& path = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_run_record: " + path + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunRecordHeader)
    throw std::runtime_error("read_run_record: header mismatch in " + path);
  RunRecord record;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (std::count(line.begin(), line.end(), ',') != 5)
      throw detail::parse_error(path, line_no, "expected 6 columns");
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    while (cells.size() < 6) cells.push_back("");
    RunPoint p;
    double tmp;
    if (!detail::parse_double(cells[0], tmp)) throw detail::parse_error(path, line_no, "bad iter");
    p.iter = static_cast<std::int64_t>(tmp);
    if (!detail::parse_double(cells[1], tmp)) throw detail::parse_error(path, line_no, "bad sfo_calls");
    p.sfo_calls = static_cast<std::int64_t>(tmp);
    auto opt_cell = [&](const std::string& s, const char* what) {
      std::optional<double> out;
      if (!s.empty()) {
        double v;
        if (!detail::parse_double(s, v)) throw detail::parse_error(path, line_no, what);
        out = v;
      }
      return out;
    };
    p.cpu_seconds = opt_cell(cells[2], "bad cpu_seconds");
    if (!detail::parse_double(cells[3], p.objective))
      throw detail::parse_error(path, line_no, "bad objective");
    p.gap = opt_cell(cells[4], "bad gap");
    p.accuracy = opt_cell(cells[5], "bad accuracy");
    record.points.push_back(p);
  }
  return record;
}

inline RunRecord read_run_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_run_record: cannot open " + path);
  return read_run_record(in, path);
}

}  // namespace ssag
