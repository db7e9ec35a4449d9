#pragma once

// Dataset ingestion, z-score preprocessing, cross-validation folds and the
// synthetic fat-data generator used by the scaling study.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rfvm/error.hpp"

namespace rfvm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Dataset {
  MatrixXd features;  // N x D
  VectorXd labels;    // {0, 1}
  std::vector<std::string> feature_names;  // empty or length D

  Index n_samples() const { return features.rows(); }
  Index n_features() const { return features.cols(); }

  Dataset subset(const std::vector<Index>& rows) const {
    return {features(rows, Eigen::all), labels(rows), feature_names};
  }
};

/// Label column selected by header name or by zero-based index.
using LabelColumn = std::variant<std::string, Index>;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_real(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::string format_real(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace detail

namespace detail {

inline Dataset read_csv(const std::filesystem::path& path, const std::optional<LabelColumn>& label_column,
                        bool has_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::vector<std::string> header;
  std::string line;
  if (has_header) {
    if (!std::getline(in, line)) throw DataError("empty file " + path.string());
    header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);
  }

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_csv_line(line));
  }
  if (rows.empty()) throw DataError("no data rows in " + path.string());

  const std::size_t n_cols = has_header ? header.size() : rows.front().size();
  const bool labelled = label_column.has_value();
  if (n_cols < (labelled ? 2u : 1u)) throw DataError("need at least one feature column and a label column");

  std::size_t label_idx = n_cols;  // n_cols: no label column
  if (labelled) {
    if (const auto* name = std::get_if<std::string>(&*label_column)) {
      if (!has_header) throw DataError("label column by name requires a header row");
      const auto it = std::find(header.begin(), header.end(), *name);
      if (it == header.end()) throw DataError("label column '" + *name + "' not found in header");
      label_idx = static_cast<std::size_t>(it - header.begin());
    } else {
      const Index idx = std::get<Index>(*label_column);
      if (idx < 0 || static_cast<std::size_t>(idx) >= n_cols) {
        throw DataError("label column index " + std::to_string(idx) + " out of range");
      }
      label_idx = static_cast<std::size_t>(idx);
    }
  }

  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(labelled ? n_cols - 1 : n_cols);
  Dataset ds;
  ds.features.resize(n, d);
  ds.labels.resize(labelled ? n : 0);
  std::set<std::string> bad_labels;

  for (Index r = 0; r < n; ++r) {
    const auto& cells = rows[static_cast<std::size_t>(r)];
    if (cells.size() != n_cols) {
      throw ParseError(static_cast<std::size_t>(r + 1), cells.size(),
                       "row " + std::to_string(r + 1) + " has " + std::to_string(cells.size()) +
                           " columns, expected " + std::to_string(n_cols));
    }
    Index j = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      const auto value = detail::parse_real(cells[c]);
      if (c == label_idx) {
        if (!value || (*value != 0.0 && *value != 1.0)) {
          bad_labels.insert(detail::trim(cells[c]));
        } else {
          ds.labels[r] = *value;
        }
        continue;
      }
      if (!value) {
        throw ParseError(static_cast<std::size_t>(r + 1), c + 1,
                         "cannot parse '" + cells[c] + "' as a real at (" + std::to_string(r + 1) +
                             "," + std::to_string(c + 1) + ")");
      }
      ds.features(r, j++) = *value;
    }
  }
  if (!bad_labels.empty()) {
    std::string listed;
    for (const auto& b : bad_labels) listed += (listed.empty() ? "" : ", ") + ("'" + b + "'");
    throw DataError("non-binary label values: " + listed);
  }
  if (has_header) {
    for (std::size_t c = 0; c < n_cols; ++c) {
      if (c != label_idx) ds.feature_names.push_back(header[c]);
    }
  }
  return ds;
}

}  // namespace detail

/// Parses a comma-separated file with a binary label column. Rows and columns
/// in error messages are 1-based: rows count data rows (header excluded),
/// columns count file columns.
inline Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column,
                        bool has_header) {
  return detail::read_csv(path, label_column, has_header);
}

/// Parses a file in which every column is a feature; `labels` stays empty.
inline Dataset load_features_csv(const std::filesystem::path& path, bool has_header) {
  return detail::read_csv(path, std::nullopt, has_header);
}

/// Writes `path` via a temporary sibling and a rename so readers never see a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

/// Features followed by a final `label` column, shortest round-trip decimals.
inline std::string dataset_to_csv(const Dataset& ds) {
  std::string out;
  for (Index j = 0; j < ds.n_features(); ++j) {
    out += ds.feature_names.empty() ? "f" + std::to_string(j) : ds.feature_names[static_cast<std::size_t>(j)];
    out += ',';
  }
  out += "label\n";
  for (Index i = 0; i < ds.n_samples(); ++i) {
    for (Index j = 0; j < ds.n_features(); ++j) {
      out += detail::format_real(ds.features(i, j));
      out += ',';
    }
    out += ds.labels[i] == 1.0 ? "1\n" : "0\n";
  }
  return out;
}

inline void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_csv(ds));
}

/// Per-feature z-scoring with statistics from training rows only. Constant
/// columns keep std 1 and are flagged; they map to 0.
struct Standardizer {
  VectorXd means;
  VectorXd stds;
  std::vector<bool> constant;

  static Standardizer identity(Index d) {
    return {VectorXd::Zero(d), VectorXd::Ones(d), std::vector<bool>(static_cast<std::size_t>(d), false)};
  }

  Index size() const { return means.size(); }

  MatrixXd transform(const MatrixXd& X) const {
    if (X.cols() != means.size()) throw ShapeError("standardizer expects " + std::to_string(means.size()) + " columns");
    return (X.rowwise() - means.transpose()).array().rowwise() / stds.transpose().array();
  }

  /// One row, with flagged columns mapped to 0 as in `apply_standardizer`.
  VectorXd transform_row(const VectorXd& x) const {
    if (x.size() != means.size()) throw ShapeError("standardizer expects " + std::to_string(means.size()) + " values");
    VectorXd z = (x - means).cwiseQuotient(stds);
    for (Index j = 0; j < z.size(); ++j) {
      if (constant[static_cast<std::size_t>(j)]) z[j] = 0.0;
    }
    return z;
  }

  MatrixXd inverse(const MatrixXd& Z) const {
    return (Z.array().rowwise() * stds.transpose().array()).matrix().rowwise() + means.transpose();
  }
};

inline Standardizer fit_standardizer(const MatrixXd& train) {
  if (train.rows() == 0) throw DataError("cannot fit a standardizer on zero rows");
  Standardizer s;
  const Index d = train.cols();
  s.means = train.colwise().mean().transpose();
  s.stds.resize(d);
  s.constant.assign(static_cast<std::size_t>(d), false);
  for (Index j = 0; j < d; ++j) {
    const double var = (train.col(j).array() - s.means[j]).square().mean();
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(s.means[j])))) {
      s.stds[j] = 1.0;
      s.constant[static_cast<std::size_t>(j)] = true;
    } else {
      s.stds[j] = sd;
    }
  }
  return s;
}

inline Standardizer fit_standardizer(const Dataset& train) { return fit_standardizer(train.features); }

inline MatrixXd apply_standardizer(const Standardizer& s, const MatrixXd& X) {
  MatrixXd Z = s.transform(X);
  for (Index j = 0; j < Z.cols(); ++j) {
    if (s.constant[static_cast<std::size_t>(j)]) Z.col(j).setZero();
  }
  return Z;
}

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // fold id per sample
  bool stratified = false;
  std::uint64_t seed = 0;

  std::vector<Index> test_rows(int fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] == fold) out.push_back(static_cast<Index>(i));
    }
    return out;
  }

  std::vector<Index> train_rows(int fold) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      if (assignments[i] != fold) out.push_back(static_cast<Index>(i));
    }
    return out;
  }
};

inline FoldPlan make_folds(const VectorXd& labels, int k, bool stratified, std::uint64_t seed) {
  const Index n = labels.size();
  if (k < 2) throw DataError("k must be at least 2");
  if (k > n) throw DataError("k=" + std::to_string(k) + " exceeds the number of samples " + std::to_string(n));

  FoldPlan plan{k, std::vector<int>(static_cast<std::size_t>(n), -1), stratified, seed};
  std::mt19937_64 rng(seed);

  if (!stratified) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
      plan.assignments[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return plan;
  }

  std::vector<Index> cls[2];
  for (Index i = 0; i < n; ++i) cls[labels[i] == 1.0 ? 1 : 0].push_back(i);
  for (int c = 0; c < 2; ++c) {
    if (static_cast<int>(cls[c].size()) < k) {
      throw DataError("stratified " + std::to_string(k) + "-fold split is infeasible: class " +
                      std::to_string(c) + " has only " + std::to_string(cls[c].size()) + " samples");
    }
  }
  // Deal each shuffled class round-robin, continuing where the previous class
  // stopped so fold sizes stay within one of each other.
  std::size_t next = 0;
  for (int c = 0; c < 2; ++c) {
    std::shuffle(cls[c].begin(), cls[c].end(), rng);
    for (Index i : cls[c]) {
      plan.assignments[static_cast<std::size_t>(i)] = static_cast<int>(next % static_cast<std::size_t>(k));
      ++next;
    }
  }
  return plan;
}

struct SyntheticData {
  Dataset data;
  std::vector<Index> informative;  // sorted ground-truth indices
  double separation = 1.5;
};

inline constexpr double kDefaultSeparation = 1.5;

/// Informative columns are N(+sep/2, 1) for class 1 and N(-sep/2, 1) for
/// class 0; the rest are N(0, 1) noise. round(frac * d) columns (at least one)
/// are informative, chosen at random. Labels are balanced to within one.
inline SyntheticData gen_synthetic(Index n, Index d, double informative_frac, std::uint64_t seed,
                                   double separation = kDefaultSeparation) {
  if (n < 2 || d < 2) throw InvalidParameter("synthetic data needs n >= 2 and d >= 2");
  if (!(informative_frac > 0.0) || informative_frac > 1.0) {
    throw InvalidParameter("informative fraction must lie in (0, 1]");
  }
  std::mt19937_64 rng(seed);
  const Index k = std::clamp<Index>(static_cast<Index>(std::llround(informative_frac * static_cast<double>(d))), 1, d);

  std::vector<Index> cols(static_cast<std::size_t>(d));
  std::iota(cols.begin(), cols.end(), Index{0});
  std::shuffle(cols.begin(), cols.end(), rng);
  std::vector<Index> informative(cols.begin(), cols.begin() + k);
  std::sort(informative.begin(), informative.end());

  VectorXd labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = i < n / 2 ? 1.0 : 0.0;
  std::shuffle(labels.data(), labels.data() + n, rng);

  std::vector<bool> is_inf(static_cast<std::size_t>(d), false);
  for (Index j : informative) is_inf[static_cast<std::size_t>(j)] = true;

  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd X(n, d);
  for (Index i = 0; i < n; ++i) {
    const double shift = (labels[i] == 1.0 ? 0.5 : -0.5) * separation;
    for (Index j = 0; j < d; ++j) {
      X(i, j) = normal(rng) + (is_inf[static_cast<std::size_t>(j)] ? shift : 0.0);
    }
  }
  return {Dataset{std::move(X), std::move(labels), {}}, std::move(informative), separation};
}

}  // namespace rfvm
