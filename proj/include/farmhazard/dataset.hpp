#pragma once

// Survival data representation, CSV ingestion, preprocessing, and the
// ordered-failure index consumed by the partial-likelihood code.

#include "farmhazard/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace farmhazard {

/// Observed times z, event indicators delta and covariates x (n x p).
/// Missing covariate cells are stored as NaN until imputed.
class SurvivalDataset {
 public:
  SurvivalDataset() = default;

  SurvivalDataset(Vector z, IntVector delta, Matrix x, std::vector<std::string> column_names = {})
      : z_(std::move(z)), delta_(std::move(delta)), x_(std::move(x)), names_(std::move(column_names)) {
    if (z_.size() != delta_.size() || z_.size() != x_.rows())
      throw InputError("dataset: z, delta and x must have the same number of rows (" +
                       std::to_string(z_.size()) + ", " + std::to_string(delta_.size()) + ", " +
                       std::to_string(x_.rows()) + ")");
    for (Index i = 0; i < z_.size(); ++i) {
      if (!std::isfinite(z_[i]) || z_[i] < 0.0)
        throw InputError("dataset: observed time at row " + std::to_string(i) + " must be finite and >= 0");
      if (delta_[i] != 0 && delta_[i] != 1)
        throw InputError("dataset: status at row " + std::to_string(i) + " must be 0 or 1");
    }
    if (names_.empty()) {
      names_.reserve(static_cast<std::size_t>(x_.cols()));
      for (Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
    } else if (static_cast<Index>(names_.size()) != x_.cols()) {
      throw InputError("dataset: column_names length does not match covariate count");
    }
  }

  Index n() const { return z_.size(); }
  Index p() const { return x_.cols(); }
  const Vector& z() const { return z_; }
  const IntVector& delta() const { return delta_; }
  const Matrix& x() const { return x_; }
  const std::vector<std::string>& column_names() const { return names_; }

  Index n_events() const { return delta_.sum(); }

  bool has_missing() const { return x_.size() > 0 && x_.hasNaN(); }

  std::vector<Index> zero_time_rows() const {
    std::vector<Index> rows;
    for (Index i = 0; i < n(); ++i)
      if (z_[i] == 0.0) rows.push_back(i);
    return rows;
  }

  SurvivalDataset subset(const std::vector<Index>& rows) const {
    Vector z(static_cast<Index>(rows.size()));
    IntVector d(static_cast<Index>(rows.size()));
    Matrix x(static_cast<Index>(rows.size()), p());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Index i = rows[r];
      z[static_cast<Index>(r)] = z_[i];
      d[static_cast<Index>(r)] = delta_[i];
      x.row(static_cast<Index>(r)) = x_.row(i);
    }
    return SurvivalDataset(std::move(z), std::move(d), std::move(x), names_);
  }

  /// Same outcomes with a different covariate matrix.
  SurvivalDataset with_x(Matrix x, std::vector<std::string> names = {}) const {
    return SurvivalDataset(z_, delta_, std::move(x), std::move(names));
  }

  SurvivalDataset without_zero_times() const {
    std::vector<Index> keep;
    for (Index i = 0; i < n(); ++i)
      if (z_[i] > 0.0) keep.push_back(i);
    return subset(keep);
  }

 private:
  Vector z_;
  IntVector delta_;
  Matrix x_;
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  std::string time_col = "time";
  std::string status_col = "status";
  /// Empty means every column except time and status.
  std::vector<std::string> covariate_cols;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool is_missing_cell(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA" || s == "NaN" || s == "nan";
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a header-first CSV. Empty cells and "NA" are missing; missing
/// covariates become NaN, missing time/status rejects the row with an error.
inline SurvivalDataset load_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw InputError(source + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = detail::split_csv_line(line);
  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (detail::trim(header[c]) == name) return c;
    throw InputError(source + ": column '" + name + "' not found in header");
  };
  const std::size_t time_c = find_col(schema.time_col);
  const std::size_t status_c = find_col(schema.status_col);
  std::vector<std::size_t> cov_c;
  std::vector<std::string> names;
  if (schema.covariate_cols.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != time_c && c != status_c) {
        cov_c.push_back(c);
        names.emplace_back(detail::trim(header[c]));
      }
  } else {
    for (const auto& name : schema.covariate_cols) {
      cov_c.push_back(find_col(name));
      names.push_back(name);
    }
  }

  std::vector<double> z;
  std::vector<int> d;
  std::vector<double> cells;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size())
      throw InputError(source + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) +
                       " fields, header has " + std::to_string(header.size()));
    const auto t = detail::parse_double(f[time_c]);
    if (!t || !std::isfinite(*t) || *t < 0.0)
      throw InputError(source + ": row " + std::to_string(row) + ", column '" + schema.time_col +
                       "': invalid time value '" + f[time_c] + "'");
    const auto s = detail::parse_double(f[status_c]);
    if (!s || (*s != 0.0 && *s != 1.0))
      throw InputError(source + ": row " + std::to_string(row) + ", column '" + schema.status_col +
                       "': status must be 0 or 1, got '" + f[status_c] + "'");
    z.push_back(*t);
    d.push_back(static_cast<int>(*s));
    for (std::size_t k = 0; k < cov_c.size(); ++k) {
      const auto& cell = f[cov_c[k]];
      if (detail::is_missing_cell(cell)) {
        cells.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        const auto v = detail::parse_double(cell);
        if (!v)
          throw InputError(source + ": row " + std::to_string(row) + ", column '" + names[k] +
                           "': cannot parse '" + cell + "'");
        cells.push_back(*v);
      }
    }
  }
  if (z.empty()) throw InputError(source + ": no data rows");

  const Index n = static_cast<Index>(z.size());
  const Index p = static_cast<Index>(cov_c.size());
  Matrix x(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) x(i, j) = cells[static_cast<std::size_t>(i * p + j)];
  return SurvivalDataset(Eigen::Map<Vector>(z.data(), n), Eigen::Map<IntVector>(d.data(), n), std::move(x),
                         std::move(names));
}

inline SurvivalDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return load_csv(in, schema, path);
}

// ---------------------------------------------------------------------------
// Preprocessing

inline double median_of(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

/// Replaces every missing cell with the median of the observed values in its column.
inline SurvivalDataset impute_median(const SurvivalDataset& ds) {
  Matrix x = ds.x();
  for (Index j = 0; j < x.cols(); ++j) {
    std::vector<double> observed;
    bool any_missing = false;
    for (Index i = 0; i < x.rows(); ++i) {
      if (std::isnan(x(i, j)))
        any_missing = true;
      else
        observed.push_back(x(i, j));
    }
    if (!any_missing) continue;
    if (observed.empty())
      throw InputError("impute_median: column '" + ds.column_names()[static_cast<std::size_t>(j)] +
                       "' has no observed values");
    const double med = median_of(std::move(observed));
    for (Index i = 0; i < x.rows(); ++i)
      if (std::isnan(x(i, j))) x(i, j) = med;
  }
  return ds.with_x(std::move(x), ds.column_names());
}

struct StandardizationRecord {
  Vector means;  // length p (all input columns)
  Vector sds;    // length p; 0 for dropped columns
  std::vector<Index> dropped_constant_columns;
  std::vector<Index> retained_columns;
};

struct Standardized {
  Matrix x;  // n x |retained|
  StandardizationRecord record;
};

/// Column-wise (x - mean) / sd with the 1/(n-1) sample sd. Constant columns
/// are dropped and listed in the record.
inline Standardized standardize(const Matrix& x) {
  const Index n = x.rows();
  if (n < 2) throw InputError("standardize: need at least 2 rows");
  StandardizationRecord rec;
  rec.means = x.colwise().mean().transpose();
  rec.sds = Vector::Zero(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt((x.col(j).array() - rec.means[j]).square().sum() / static_cast<double>(n - 1));
    const double scale = std::max(1.0, std::abs(rec.means[j]));
    if (!(sd > 1e-13 * scale)) {
      rec.dropped_constant_columns.push_back(j);
    } else {
      rec.sds[j] = sd;
      rec.retained_columns.push_back(j);
    }
  }
  Matrix out(n, static_cast<Index>(rec.retained_columns.size()));
  for (std::size_t k = 0; k < rec.retained_columns.size(); ++k) {
    const Index j = rec.retained_columns[k];
    out.col(static_cast<Index>(k)) = (x.col(j).array() - rec.means[j]) / rec.sds[j];
  }
  return {std::move(out), std::move(rec)};
}

/// Applies a fitted record to new rows (e.g. a held-out split).
inline Matrix apply_standardization(const Matrix& x, const StandardizationRecord& rec) {
  Matrix out(x.rows(), static_cast<Index>(rec.retained_columns.size()));
  for (std::size_t k = 0; k < rec.retained_columns.size(); ++k) {
    const Index j = rec.retained_columns[k];
    out.col(static_cast<Index>(k)) = (x.col(j).array() - rec.means[j]) / rec.sds[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Failure index

/// Samples sorted by observed time (events before censorings at equal times).
/// Risk sets follow the Breslow convention: every failure at time t has risk
/// set {i : z_i >= t}, which is the sorted suffix starting at the first
/// position whose time equals t.
struct FailureIndex {
  Index n = 0;
  std::vector<Index> order;              // sorted position -> sample index
  std::vector<Index> position_of;        // sample index -> sorted position
  std::vector<Index> failure_positions;  // sorted positions of events, ascending
  std::vector<Index> risk_begin;         // per failure: first sorted position of its risk set
  Index n_events = 0;

  Index risk_set_size(Index failure) const { return n - risk_begin[static_cast<std::size_t>(failure)]; }
  Index failure_sample(Index failure) const {
    return order[static_cast<std::size_t>(failure_positions[static_cast<std::size_t>(failure)])];
  }
};

inline FailureIndex build_failure_index(const Vector& z, const IntVector& delta) {
  if (z.size() != delta.size()) throw InputError("build_failure_index: z and delta lengths differ");
  FailureIndex idx;
  idx.n = z.size();
  idx.order.resize(static_cast<std::size_t>(idx.n));
  std::iota(idx.order.begin(), idx.order.end(), Index{0});
  std::stable_sort(idx.order.begin(), idx.order.end(), [&](Index a, Index b) {
    if (z[a] != z[b]) return z[a] < z[b];
    return delta[a] > delta[b];
  });
  idx.position_of.resize(idx.order.size());
  for (std::size_t k = 0; k < idx.order.size(); ++k) idx.position_of[static_cast<std::size_t>(idx.order[k])] = static_cast<Index>(k);

  Index group_start = 0;
  for (Index k = 0; k < idx.n; ++k) {
    const Index i = idx.order[static_cast<std::size_t>(k)];
    if (k == 0 || z[i] != z[idx.order[static_cast<std::size_t>(k - 1)]]) group_start = k;
    if (delta[i] == 1) {
      idx.failure_positions.push_back(k);
      idx.risk_begin.push_back(group_start);
    }
  }
  idx.n_events = static_cast<Index>(idx.failure_positions.size());
  if (idx.n_events == 0) throw InputError("build_failure_index: no events (all observations censored)");
  return idx;
}

inline FailureIndex build_failure_index(const SurvivalDataset& ds) { return build_failure_index(ds.z(), ds.delta()); }

}  // namespace farmhazard
