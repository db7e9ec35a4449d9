#pragma once

// Variational state of the relevance feature and vector machine: one home for
// every factor of the mean-field posterior, the active (unpruned) sets, and the
// working copies of the design matrices restricted to those sets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfvm/distributions.hpp"
#include "rfvm/error.hpp"

namespace rfvm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Steps of the coordinate-ascent sweep. `scale` is the joint rescaling
/// v -> c v, a -> a / c; it must be followed by `psi` and `delta`.
enum class Factor { y, xi, a, v, b, tau, scale, psi, delta };

inline const std::vector<Factor> kDefaultUpdateOrder = {
    Factor::y,   Factor::xi,    Factor::a,   Factor::v,    Factor::b,
    Factor::tau, Factor::scale, Factor::psi, Factor::delta};

inline std::string factor_name(Factor f) {
  switch (f) {
    case Factor::y: return "y";
    case Factor::xi: return "xi";
    case Factor::a: return "a";
    case Factor::v: return "v";
    case Factor::b: return "b";
    case Factor::tau: return "tau";
    case Factor::scale: return "scale";
    case Factor::psi: return "psi";
    case Factor::delta: return "delta";
  }
  return "?";
}

inline Factor parse_factor(const std::string& name) {
  for (Factor f : {Factor::y, Factor::xi, Factor::a, Factor::v, Factor::b, Factor::tau, Factor::scale,
                   Factor::psi, Factor::delta}) {
    if (factor_name(f) == name) return f;
  }
  throw InvalidParameter("unknown update step '" + name + "'");
}

/// How a coordinate of the v sweep turns the gathered linear coefficient and
/// precision into new factor parameters.
enum class VUpdateRule {
  exact,        // maximizes the bound over the folded-normal family
  closed_form,  // mu = linear / prec, variance 1 / prec, always accepted
  guarded,      // closed form, kept only if it does not lower the bound
};

inline std::string v_rule_name(VUpdateRule r) {
  switch (r) {
    case VUpdateRule::exact: return "exact";
    case VUpdateRule::closed_form: return "closed-form";
    case VUpdateRule::guarded: return "guarded";
  }
  return "?";
}

inline VUpdateRule parse_v_rule(const std::string& name) {
  for (VUpdateRule r : {VUpdateRule::exact, VUpdateRule::closed_form, VUpdateRule::guarded}) {
    if (v_rule_name(r) == name) return r;
  }
  throw InvalidParameter("unknown v update rule '" + name + "'");
}

struct Hyperparams {
  double alpha0_psi = 1e-6, beta0_psi = 1e-6;
  double alpha0_delta = 1e-6, beta0_delta = 1e-6;
  double alpha0_tau = 1e-6, beta0_tau = 1e-6;
  double prune_threshold_v = 1e-2;  // relative to max folded mean of v
  double prune_threshold_a = 1e-3;  // relative to max |<a>|
  int conv_window = 100;
  double conv_rel_tol = 1e-8;
  int max_iters = 5000;
  int prune_warmup_iters = 50;
  bool pruning = true;
  std::uint64_t seed = 0;
  std::vector<Factor> update_order = kDefaultUpdateOrder;
  VUpdateRule v_rule = VUpdateRule::exact;

  void validate() const {
    const double pos[] = {alpha0_psi, beta0_psi, alpha0_delta,      beta0_delta,       alpha0_tau,
                          beta0_tau,  conv_rel_tol, prune_threshold_v, prune_threshold_a};
    for (double p : pos) {
      if (!(p > 0.0) || !std::isfinite(p)) {
        throw InvalidParameter("hyperparameters must be finite and > 0");
      }
    }
    if (conv_window < 1) throw InvalidParameter("conv_window must be >= 1");
    if (max_iters < conv_window) throw InvalidParameter("max_iters must be >= conv_window");
    if (prune_warmup_iters < 0) throw InvalidParameter("prune_warmup_iters must be >= 0");
  }
};

/// Training inputs X (N x D), relevance-vector candidates X_tilde (Ñ x D) and
/// labels t in {0, 1}.
struct DesignMatrices {
  MatrixXd X;
  MatrixXd X_tilde;
  VectorXd t;

  /// Candidates default to the training rows.
  static DesignMatrices from_training(MatrixXd X, VectorXd t) {
    DesignMatrices d{std::move(X), MatrixXd{}, std::move(t)};
    d.X_tilde = d.X;
    return d;
  }

  void validate() const {
    if (X.rows() == 0 || X.cols() == 0) throw DataError("empty design matrix");
    if (X.cols() != X_tilde.cols()) {
      throw ShapeError("X and X_tilde must have the same number of columns");
    }
    if (X_tilde.rows() == 0) throw DataError("no relevance-vector candidates");
    if (t.size() != X.rows()) throw ShapeError("label count does not match rows of X");
    if (!X.allFinite() || !X_tilde.allFinite()) throw DataError("design matrix has non-finite values");
    bool has0 = false, has1 = false;
    for (Index n = 0; n < t.size(); ++n) {
      if (t[n] == 0.0) has0 = true;
      else if (t[n] == 1.0) has1 = true;
      else throw DataError("labels must be 0 or 1");
    }
    if (!has0 || !has1) throw DataError("labels contain a single class; both classes are required");
  }
};

struct QA {
  VectorXd mean;          // <a>
  MatrixXd cov;           // Sigma_a
  MatrixXd second_moment; // <a a^T> = Sigma_a + <a><a>^T
  double log_det_cov = 0.0;

  void refresh_second_moment() { second_moment = cov + mean * mean.transpose(); }
};

/// One relevance factor q(v_d): underlying normal N(mu, 1/prec), folded.
struct QVd {
  double mu;
  double prec;
  double folded_mean;
  double folded_var;
  double second_moment;  // mu^2 + 1/prec
};

/// All q(v_d) as parallel arrays over active features.
struct QV {
  VectorXd mu, prec, folded_mean, folded_var, second_moment;

  Index size() const { return mu.size(); }

  void resize(Index d) {
    mu.resize(d);
    prec.resize(d);
    folded_mean.resize(d);
    folded_var.resize(d);
    second_moment.resize(d);
  }

  void set(Index d, double m, double p) {
    const FoldedNormalParams fp{m, 1.0 / p};
    mu[d] = m;
    prec[d] = p;
    folded_mean[d] = rfvm::folded_mean(fp);
    folded_var[d] = rfvm::folded_variance(fp);
    second_moment[d] = m * m + 1.0 / p;
  }

  QVd at(Index d) const {
    return {mu[d], prec[d], folded_mean[d], folded_var[d], second_moment[d]};
  }

  QV select(const std::vector<Index>& keep) const {
    QV out;
    out.mu = mu(keep);
    out.prec = prec(keep);
    out.folded_mean = folded_mean(keep);
    out.folded_var = folded_var(keep);
    out.second_moment = second_moment(keep);
    return out;
  }
};

/// Independent gamma factors, one per active element.
struct QGammaVec {
  VectorXd alphas, betas;

  Index size() const { return alphas.size(); }
  VectorXd means() const { return alphas.cwiseQuotient(betas); }
  GammaParams at(Index i) const { return {alphas[i], betas[i]}; }

  QGammaVec select(const std::vector<Index>& keep) const { return {alphas(keep), betas(keep)}; }
};

struct QB {
  double mean = 0.0;
  double var = 1.0;
  double second_moment() const { return mean * mean + var; }
};

struct QY {
  VectorXd mean, var, xi;
};

struct ActiveSet {
  std::vector<bool> feature_mask, rv_mask;
  std::vector<Index> feature_index, rv_index;  // active position -> original index

  static ActiveSet all(Index d, Index n_tilde) {
    ActiveSet s;
    s.feature_mask.assign(static_cast<std::size_t>(d), true);
    s.rv_mask.assign(static_cast<std::size_t>(n_tilde), true);
    for (Index i = 0; i < d; ++i) s.feature_index.push_back(i);
    for (Index i = 0; i < n_tilde; ++i) s.rv_index.push_back(i);
    return s;
  }

  Index n_features() const { return static_cast<Index>(feature_index.size()); }
  Index n_rvs() const { return static_cast<Index>(rv_index.size()); }

  bool consistent() const {
    auto check = [](const std::vector<bool>& mask, const std::vector<Index>& idx) {
      std::size_t count = 0;
      for (bool b : mask) count += b ? 1 : 0;
      if (count != idx.size()) return false;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= mask.size()) return false;
        if (!mask[static_cast<std::size_t>(idx[i])]) return false;
        if (i > 0 && idx[i] <= idx[i - 1]) return false;
      }
      return true;
    };
    return check(feature_mask, feature_index) && check(rv_mask, rv_index);
  }
};

struct TraceRecord {
  long iteration = 0;
  double elbo = 0.0;
  Index n_active_features = 0;
  Index n_active_rvs = 0;
  double elapsed_seconds = 0.0;
  bool pruned = false;                 // pruning removed something this iteration
  double elbo_before_prune = std::nan("");  // set only when pruned
};

/// Full mean-field posterior plus the data restricted to the active sets.
///
/// `dual_design` caches R = X diag(<v>) X_tilde^T (N x Ñ_active), the per-sample
/// vectors r_n = sum_d <v_d> x_{n,d} x_tilde_{:,d}. Every update that changes
/// q(v) or an active set keeps it in sync.
struct VariationalState {
  ActiveSet active;
  MatrixXd X;        // N x D_active
  MatrixXd X_tilde;  // Ñ_active x D_active
  VectorXd t;
  VectorXd col_sq;   // sum_n x_{n,d}^2 per active feature
  MatrixXd dual_design;

  QA a;
  QV v;
  QGammaVec psi, delta;
  GammaParams tau;
  QB b;
  QY y;

  Index n_samples() const { return X.rows(); }
  Index n_features() const { return X.cols(); }
  Index n_rvs() const { return X_tilde.rows(); }

  void refresh_dual_design() {
    dual_design.noalias() = (X * v.folded_mean.asDiagonal()) * X_tilde.transpose();
  }

  /// Model output means m_n = r_n^T <a>.
  VectorXd model_mean() const { return dual_design * a.mean; }
};

/// Underlying-normal location giving a folded mean of `target` at variance `var`.
inline double folded_location_for_mean(double target, double var) {
  const double sigma = std::sqrt(var);
  const double floor = sigma * std::sqrt(2.0 / std::numbers::pi);
  if (target <= floor) return 0.0;
  double mu = target;
  for (int it = 0; it < 50; ++it) {
    const double f = folded_mean({mu, var}) - target;
    const double slope = std::erf(mu / (sigma * std::numbers::sqrt2));
    const double step = f / slope;
    mu -= step;
    if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(mu))) break;
  }
  return mu;
}

inline constexpr double kInitialRelevanceVariance = 0.1;

/// Starting point of coordinate ascent: gamma factors at their priors, <a> = 0
/// with identity covariance, every v_d with folded mean 1, <b> = 0, <y> = 2t - 1,
/// unit latent variances and xi = 1.
inline VariationalState init_state(const DesignMatrices& data, const Hyperparams& hp) {
  hp.validate();
  data.validate();
  const Index n = data.X.rows(), d = data.X.cols(), nt = data.X_tilde.rows();

  VariationalState s;
  s.active = ActiveSet::all(d, nt);
  s.X = data.X;
  s.X_tilde = data.X_tilde;
  s.t = data.t;
  s.col_sq = s.X.colwise().squaredNorm().transpose();

  s.a.mean = VectorXd::Zero(nt);
  s.a.cov = MatrixXd::Identity(nt, nt);
  s.a.log_det_cov = 0.0;
  s.a.refresh_second_moment();

  const double mu0 = folded_location_for_mean(1.0, kInitialRelevanceVariance);
  s.v.resize(d);
  for (Index j = 0; j < d; ++j) s.v.set(j, mu0, 1.0 / kInitialRelevanceVariance);

  s.psi = {VectorXd::Constant(nt, hp.alpha0_psi), VectorXd::Constant(nt, hp.beta0_psi)};
  s.delta = {VectorXd::Constant(d, hp.alpha0_delta), VectorXd::Constant(d, hp.beta0_delta)};
  s.tau = {hp.alpha0_tau, hp.beta0_tau};
  s.b = {0.0, 1.0};

  s.y.mean = 2.0 * s.t.array() - 1.0;
  s.y.var = VectorXd::Ones(n);
  s.y.xi = VectorXd::Ones(n);

  s.refresh_dual_design();
  return s;
}

struct PruneResult {
  Index features_removed = 0;
  Index rvs_removed = 0;
  std::vector<std::string> warnings;
  bool changed() const { return features_removed > 0 || rvs_removed > 0; }
};

namespace detail {

// Indices whose score reaches threshold * max(score). Never returns an empty set.
inline std::vector<Index> surviving(const VectorXd& score, double rel_threshold, bool& emptied) {
  emptied = false;
  std::vector<Index> keep;
  if (score.size() == 0) return keep;
  Index arg_max = 0;
  const double mx = score.maxCoeff(&arg_max);
  const double cut = rel_threshold * mx;
  for (Index i = 0; i < score.size(); ++i) {
    if (!(score[i] < cut)) keep.push_back(i);
  }
  if (keep.empty()) {
    emptied = true;
    keep.push_back(arg_max);
  }
  return keep;
}

}  // namespace detail

struct PrunePlan {
  std::vector<Index> keep_features;  // active positions that survive
  std::vector<Index> keep_rvs;
  PruneResult result;
};

/// Decides which features (folded means of v) and relevance vectors (|<a>|)
/// fall below their relative thresholds, without touching the state.
inline PrunePlan plan_pruning(const VariationalState& s, const Hyperparams& hp) {
  PrunePlan plan;
  bool emptied_f = false, emptied_a = false;
  plan.keep_features = detail::surviving(s.v.folded_mean, hp.prune_threshold_v, emptied_f);
  plan.keep_rvs = detail::surviving(s.a.mean.cwiseAbs(), hp.prune_threshold_a, emptied_a);
  if (emptied_f) plan.result.warnings.push_back("feature pruning would empty the active set; kept the largest");
  if (emptied_a) plan.result.warnings.push_back("relevance-vector pruning would empty the active set; kept the largest");
  plan.result.features_removed = s.n_features() - static_cast<Index>(plan.keep_features.size());
  plan.result.rvs_removed = s.n_rvs() - static_cast<Index>(plan.keep_rvs.size());
  return plan;
}

/// Relative-threshold pruning. Compacts every factor and the working matrices;
/// a pruned index never comes back.
inline PruneResult apply_pruning(VariationalState& s, const Hyperparams& hp) {
  PrunePlan plan = plan_pruning(s, hp);
  const PruneResult& res = plan.result;
  const std::vector<Index>& keep_f = plan.keep_features;
  const std::vector<Index>& keep_a = plan.keep_rvs;
  if (!res.changed()) return res;

  if (res.features_removed > 0) {
    std::vector<Index> new_index;
    new_index.reserve(keep_f.size());
    for (Index j : keep_f) new_index.push_back(s.active.feature_index[static_cast<std::size_t>(j)]);
    for (Index j : s.active.feature_index) s.active.feature_mask[static_cast<std::size_t>(j)] = false;
    for (Index j : new_index) s.active.feature_mask[static_cast<std::size_t>(j)] = true;
    s.active.feature_index = std::move(new_index);

    s.X = MatrixXd(s.X(Eigen::all, keep_f));
    s.X_tilde = MatrixXd(s.X_tilde(Eigen::all, keep_f));
    s.col_sq = VectorXd(s.col_sq(keep_f));
    s.v = s.v.select(keep_f);
    s.delta = s.delta.select(keep_f);
  }
  if (res.rvs_removed > 0) {
    std::vector<Index> new_index;
    new_index.reserve(keep_a.size());
    for (Index i : keep_a) new_index.push_back(s.active.rv_index[static_cast<std::size_t>(i)]);
    for (Index i : s.active.rv_index) s.active.rv_mask[static_cast<std::size_t>(i)] = false;
    for (Index i : new_index) s.active.rv_mask[static_cast<std::size_t>(i)] = true;
    s.active.rv_index = std::move(new_index);

    s.X_tilde = MatrixXd(s.X_tilde(keep_a, Eigen::all));
    s.a.mean = VectorXd(s.a.mean(keep_a));
    s.a.cov = MatrixXd(s.a.cov(keep_a, keep_a));
    // Principal submatrix of an SPD matrix: still SPD.
    Eigen::LLT<MatrixXd> llt(s.a.cov);
    if (llt.info() == Eigen::Success) {
      s.a.log_det_cov = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }
    s.a.refresh_second_moment();
    s.psi = s.psi.select(keep_a);
  }
  s.refresh_dual_design();
  return res;
}

}  // namespace rfvm
