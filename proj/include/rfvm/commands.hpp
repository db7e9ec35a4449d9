#pragma once

// The batch workflows behind the command-line tool. Each command takes a plain
// argument struct, writes its files atomically and returns what it computed so
// callers (and tests) can inspect results without re-reading files.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfvm/data.hpp"
#include "rfvm/error.hpp"
#include "rfvm/model.hpp"
#include "rfvm/model_io.hpp"
#include "rfvm/predict.hpp"

namespace rfvm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// train

struct TrainCommand {
  fs::path data;
  LabelColumn label = std::string("label");
  bool header = true;
  fs::path model_out;
  std::optional<fs::path> trace_out;
  Hyperparams hp;
};

/// iter,elbo,n_feat,n_rv,seconds followed by the pruning annotation.
inline std::string trace_to_csv(const FitReport& rep) {
  std::string out = "iter,elbo,n_feat,n_rv,seconds,pruned,elbo_before_prune\n";
  for (const auto& r : rep.trace) {
    out += std::to_string(r.iteration) + ',' + detail::format_real(r.elbo) + ',' +
           std::to_string(r.n_active_features) + ',' + std::to_string(r.n_active_rvs) + ',' +
           detail::format_real(r.elapsed_seconds) + ',' + (r.pruned ? "1," : "0,") +
           (r.pruned ? detail::format_real(r.elbo_before_prune) : std::string()) + '\n';
  }
  return out;
}

inline TrainResult cmd_train(const TrainCommand& c) {
  c.hp.validate();
  const Dataset data = load_csv(c.data, c.label, c.header);
  TrainResult res = train(data, c.hp);
  save_model(res.model, c.model_out);
  if (c.trace_out) write_file_atomic(*c.trace_out, trace_to_csv(res.report));
  return res;
}

// ---------------------------------------------------------------------------
// predict

struct PredictCommand {
  fs::path model;
  fs::path data;
  std::optional<LabelColumn> label;  // dropped from the input when given
  bool header = true;
  fs::path out;
  double threshold = 0.5;
};

struct PredictOutcome {
  VectorXd proba;
  std::vector<int> labels;
  std::optional<double> accuracy;  // when the input carried labels
};

inline PredictOutcome cmd_predict(const PredictCommand& c) {
  if (!(c.threshold > 0.0 && c.threshold < 1.0)) {
    throw InvalidParameter("threshold must lie in (0, 1), got " + std::to_string(c.threshold));
  }
  const FittedModel m = load_model(c.model);
  const Dataset data = c.label ? load_csv(c.data, *c.label, c.header) : load_features_csv(c.data, c.header);
  PredictOutcome out;
  out.proba = predict_proba_batch(m, data.features);
  std::string csv = "row_index,proba,label\n";
  Index correct = 0;
  for (Index i = 0; i < out.proba.size(); ++i) {
    const int lab = out.proba[i] >= c.threshold ? 1 : 0;
    out.labels.push_back(lab);
    if (c.label && static_cast<double>(lab) == data.labels[i]) ++correct;
    csv += std::to_string(i) + ',' + detail::format_real(out.proba[i]) + ',' + std::to_string(lab) + '\n';
  }
  if (c.label) out.accuracy = static_cast<double>(correct) / static_cast<double>(out.proba.size());
  write_file_atomic(c.out, csv);
  return out;
}

// ---------------------------------------------------------------------------
// cv

struct FoldMetrics {
  int fold = 0;
  Index n_train = 0, n_test = 0;
  double accuracy = 0.0;
  double pct_features = 0.0;  // 100 |active features| / D
  double pct_rvs = 0.0;       // 100 |active RVs| / training rows
  long iterations = 0;
  bool converged = false;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

struct MetricsReport {
  std::vector<FoldMetrics> folds;
  bool stratified = true;
  MeanStd accuracy, pct_features, pct_rvs;
};

struct FoldOutcome {
  FoldMetrics metrics;
  TrainResult trained;
};

/// Trains on the training part of fold `f` (standardizer included) and scores
/// the held-out part. Test rows are touched only after training.
inline FoldOutcome evaluate_fold(const Dataset& data, const FoldPlan& plan, int f, const Hyperparams& hp) {
  const Dataset tr = data.subset(plan.train_rows(f));
  FoldOutcome out{{}, train(tr, hp)};
  const Dataset te = data.subset(plan.test_rows(f));
  const FittedModel& m = out.trained.model;
  FoldMetrics& fm = out.metrics;
  fm.fold = f;
  fm.n_train = tr.n_samples();
  fm.n_test = te.n_samples();
  fm.accuracy = accuracy(m, te);
  fm.pct_features = 100.0 * static_cast<double>(m.n_active_features()) / static_cast<double>(data.n_features());
  fm.pct_rvs = 100.0 * static_cast<double>(m.n_active_rvs()) / static_cast<double>(tr.n_samples());
  fm.iterations = out.trained.report.iterations_run;
  fm.converged = out.trained.report.converged;
  return out;
}

/// k-fold cross-validation; the standardizer is refitted on each training part.
/// Leave-one-out (k == N) cannot be stratified and uses plain folds.
inline MetricsReport cross_validate(const Dataset& data, int k, bool stratified, const Hyperparams& hp) {
  hp.validate();
  if (k < 2 || k > data.n_samples()) {
    throw DataError("cannot split " + std::to_string(data.n_samples()) + " rows into " + std::to_string(k) + " folds");
  }
  MetricsReport rep;
  rep.stratified = stratified && k < data.n_samples();
  const FoldPlan plan = make_folds(data.labels, k, rep.stratified, hp.seed);
  std::vector<double> acc, pf, pr;
  for (int f = 0; f < k; ++f) {
    const FoldMetrics fm = evaluate_fold(data, plan, f, hp).metrics;
    rep.folds.push_back(fm);
    acc.push_back(fm.accuracy);
    pf.push_back(fm.pct_features);
    pr.push_back(fm.pct_rvs);
  }
  rep.accuracy = mean_std(acc);
  rep.pct_features = mean_std(pf);
  rep.pct_rvs = mean_std(pr);
  return rep;
}

/// Per-fold rows followed by `mean` and `std` rows.
inline std::string metrics_to_csv(const MetricsReport& r) {
  std::string out = "fold,n_train,n_test,accuracy,pct_features,pct_rvs,iterations,converged\n";
  for (const auto& f : r.folds) {
    out += std::to_string(f.fold) + ',' + std::to_string(f.n_train) + ',' + std::to_string(f.n_test) + ',' +
           detail::format_real(f.accuracy) + ',' + detail::format_real(f.pct_features) + ',' +
           detail::format_real(f.pct_rvs) + ',' + std::to_string(f.iterations) + ',' + (f.converged ? "1" : "0") +
           '\n';
  }
  out += "mean,,," + detail::format_real(r.accuracy.mean) + ',' + detail::format_real(r.pct_features.mean) + ',' +
         detail::format_real(r.pct_rvs.mean) + ",,\n";
  out += "std,,," + detail::format_real(r.accuracy.std) + ',' + detail::format_real(r.pct_features.std) + ',' +
         detail::format_real(r.pct_rvs.std) + ",,\n";
  return out;
}

struct CvCommand {
  fs::path data;
  LabelColumn label = std::string("label");
  bool header = true;
  int k = 5;
  bool stratified = true;
  Hyperparams hp;
  std::optional<fs::path> out;
};

inline MetricsReport cmd_cv(const CvCommand& c) {
  const Dataset data = load_csv(c.data, c.label, c.header);
  MetricsReport r = cross_validate(data, c.k, c.stratified, c.hp);
  if (c.out) write_file_atomic(*c.out, metrics_to_csv(r));
  return r;
}

// ---------------------------------------------------------------------------
// synth

struct SynthCommand {
  Index n = 300, d = 50;
  double frac = 0.1;
  std::uint64_t seed = 0;
  double separation = kDefaultSeparation;
  fs::path out;
};

/// `data.csv` -> `data.informative.csv`.
inline fs::path informative_sidecar_path(const fs::path& out) {
  fs::path p = out;
  p.replace_filename(out.stem().string() + ".informative.csv");
  return p;
}

inline SyntheticData cmd_synth(const SynthCommand& c) {
  SyntheticData s = gen_synthetic(c.n, c.d, c.frac, c.seed, c.separation);
  write_csv(s.data, c.out);
  std::string side = "index\n";
  for (Index j : s.informative) side += std::to_string(j) + '\n';
  write_file_atomic(informative_sidecar_path(c.out), side);
  return s;
}

// ---------------------------------------------------------------------------
// scaling

struct ScalingRow {
  Index d = 0;
  int repeats = 0;
  MeanStd seconds, features, rvs, iterations;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  std::optional<double> slope;  // least-squares slope of ln(mean seconds) on ln(d)
};

/// Ordinary least-squares slope of y on x; empty with fewer than two points.
inline std::optional<double> ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2 || x.size() != y.size()) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  return sxy / sxx;
}

inline std::optional<double> loglog_slope(const ScalingReport& r) {
  std::vector<double> x, y;
  for (const auto& row : r.rows) {
    x.push_back(std::log(static_cast<double>(row.d)));
    y.push_back(std::log(row.seconds.mean));
  }
  return ols_slope(x, y);
}

/// Seed for repeat `r` at width `d`, derived from the study seed.
inline std::uint64_t scaling_seed(std::uint64_t seed, Index d, int r) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(r)};
  std::mt19937_64 gen(seq);
  return gen();
}

using ScalingProgress = std::function<void(Index d, int repeat, double seconds)>;

inline ScalingReport run_scaling(Index n, const std::vector<Index>& d_list, int repeats, double frac,
                                 const Hyperparams& hp, const ScalingProgress& progress = {}) {
  hp.validate();
  if (d_list.empty()) throw InvalidParameter("scaling needs at least one d");
  if (repeats < 1) throw InvalidParameter("scaling needs repeats >= 1");
  for (std::size_t i = 1; i < d_list.size(); ++i) {
    if (d_list[i] <= d_list[i - 1]) throw InvalidParameter("d list must be strictly ascending");
  }
  ScalingReport rep;
  for (Index d : d_list) {
    std::vector<double> secs, feats, rvs, iters;
    for (int r = 0; r < repeats; ++r) {
      const SyntheticData syn = gen_synthetic(n, d, frac, scaling_seed(hp.seed, d, r));
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult res = train(syn.data, hp);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      secs.push_back(s);
      feats.push_back(static_cast<double>(res.model.n_active_features()));
      rvs.push_back(static_cast<double>(res.model.n_active_rvs()));
      iters.push_back(static_cast<double>(res.report.iterations_run));
      if (progress) progress(d, r, s);
    }
    rep.rows.push_back({d, repeats, mean_std(secs), mean_std(feats), mean_std(rvs), mean_std(iters)});
  }
  rep.slope = loglog_slope(rep);
  return rep;
}

/// One row per d; the slope column repeats the study slope and is empty when
/// it is undefined.
inline std::string scaling_to_csv(const ScalingReport& r) {
  const std::string slope = r.slope ? detail::format_real(*r.slope) : std::string();
  std::string out = "d,repeats,mean_seconds,std_seconds,mean_features,mean_rvs,mean_iterations,slope\n";
  for (const auto& row : r.rows) {
    out += std::to_string(row.d) + ',' + std::to_string(row.repeats) + ',' + detail::format_real(row.seconds.mean) +
           ',' + detail::format_real(row.seconds.std) + ',' + detail::format_real(row.features.mean) + ',' +
           detail::format_real(row.rvs.mean) + ',' + detail::format_real(row.iterations.mean) + ',' + slope + '\n';
  }
  return out;
}

struct ScalingCommand {
  Index n = 300;
  std::vector<Index> d_list{50, 150, 450, 1350, 4050, 13500};
  int repeats = 10;
  double frac = 0.1;
  Hyperparams hp;
  std::optional<fs::path> out;
};

inline ScalingReport cmd_scaling(const ScalingCommand& c, const ScalingProgress& progress = {}) {
  ScalingReport r = run_scaling(c.n, c.d_list, c.repeats, c.frac, c.hp, progress);
  if (c.out) write_file_atomic(*c.out, scaling_to_csv(r));
  return r;
}

// ---------------------------------------------------------------------------
// rank

struct RankCommand {
  fs::path model;
  Index top_k = 10;
  fs::path out;
};

struct RankReport {
  std::vector<RankedFeature> positive;  // largest first
  std::vector<RankedFeature> negative;  // most negative first
  std::vector<std::string> warnings;
};

inline RankReport top_ranked(const FittedModel& m, Index top_k) {
  if (top_k < 0) throw InvalidParameter("top_k must be >= 0");
  RankReport r;
  if (top_k > m.n_active_features()) {
    r.warnings.push_back("top_k " + std::to_string(top_k) + " exceeds the " +
                         std::to_string(m.n_active_features()) + " active features; emitting all");
  }
  const auto ranked = rank_features(m);
  for (const auto& f : ranked) {
    if (f.weight > 0.0 && static_cast<Index>(r.positive.size()) < top_k) r.positive.push_back(f);
  }
  for (auto it = ranked.rbegin(); it != ranked.rend(); ++it) {
    if (it->weight < 0.0 && static_cast<Index>(r.negative.size()) < top_k) r.negative.push_back(*it);
  }
  return r;
}

inline std::string rank_to_csv(const FittedModel& m, const RankReport& r) {
  auto name = [&](Index j) {
    return m.feature_names.empty() ? "f" + std::to_string(j) : m.feature_names[static_cast<std::size_t>(j)];
  };
  std::string out = "block,rank,index,name,weight,weight_underlying\n";
  auto emit = [&](const char* block, const std::vector<RankedFeature>& fs) {
    for (std::size_t i = 0; i < fs.size(); ++i) {
      out += std::string(block) + ',' + std::to_string(i + 1) + ',' + std::to_string(fs[i].index) + ',' +
             name(fs[i].index) + ',' + detail::format_real(fs[i].weight) + ',' +
             detail::format_real(fs[i].weight_underlying) + '\n';
    }
  };
  emit("positive", r.positive);
  emit("negative", r.negative);
  return out;
}

inline RankReport cmd_rank(const RankCommand& c) {
  const FittedModel m = load_model(c.model);
  RankReport r = top_ranked(m, c.top_k);
  write_file_atomic(c.out, rank_to_csv(m, r));
  return r;
}

}  // namespace rfvm
