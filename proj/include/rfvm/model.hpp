#pragma once

// The trained classifier: posterior summaries over the surviving features and
// relevance vectors, plus the preprocessing needed to map raw rows into the
// space the model was fitted in.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfvm/data.hpp"
#include "rfvm/inference.hpp"
#include "rfvm/model_state.hpp"

namespace rfvm {

struct FittedModel {
  Index n_features_total = 0;              // D of the raw input
  std::vector<std::string> feature_names;  // empty or length D
  Standardizer standardizer;
  Hyperparams hp;

  std::vector<Index> feature_index;  // active feature -> raw column
  std::vector<Index> rv_index;       // active RV -> training row

  // q(v) over active features: underlying normal and its folded moments.
  VectorXd v_mu, v_prec, v_mean, v_var;
  // q(a) over active RVs.
  VectorXd a_mean;
  MatrixXd a_cov;
  // Standardized RV rows restricted to active features.
  MatrixXd X_tilde;
  double b_mean = 0.0, b_var = 1.0;
  GammaParams tau;

  long iterations = 0;
  bool converged = false;
  double final_elbo = 0.0;

  // Derived from the fields above by `refresh()`; not serialized.
  VectorXd proj_a;     // X_tilde^T <a>
  VectorXd quad_a;     // x_tilde_d^T <a a^T> x_tilde_d
  MatrixXd a_second;   // <a a^T>

  Index n_active_features() const { return static_cast<Index>(feature_index.size()); }
  Index n_active_rvs() const { return static_cast<Index>(rv_index.size()); }
  double tau_mean() const { return gamma_mean(tau); }

  void refresh() {
    proj_a = X_tilde.transpose() * a_mean;
    a_second = a_cov + a_mean * a_mean.transpose();
    quad_a = X_tilde.cwiseProduct(a_second * X_tilde).colwise().sum().transpose();
  }

  /// Structural consistency of every container; throws ModelFormatError.
  void check() const {
    const Index nd = n_active_features(), nt = n_active_rvs();
    auto fail = [](const std::string& m) { throw ModelFormatError("inconsistent model: " + m); };
    if (standardizer.size() != n_features_total ||
        standardizer.constant.size() != static_cast<std::size_t>(n_features_total)) {
      fail("standardizer length");
    }
    if (!feature_names.empty() && feature_names.size() != static_cast<std::size_t>(n_features_total)) {
      fail("feature name count");
    }
    if (nd < 1 || nt < 1) fail("empty active set");
    for (Index j : feature_index) {
      if (j < 0 || j >= n_features_total) fail("feature index out of range");
    }
    if (v_mu.size() != nd || v_prec.size() != nd || v_mean.size() != nd || v_var.size() != nd) {
      fail("q(v) length");
    }
    if (a_mean.size() != nt || a_cov.rows() != nt || a_cov.cols() != nt) fail("q(a) shape");
    if (X_tilde.rows() != nt || X_tilde.cols() != nd) fail("relevance vector shape");
    if (!(b_var > 0.0) || !(tau.alpha > 0.0) || !(tau.beta > 0.0)) fail("non-positive variance");
  }
};

struct TrainResult {
  FittedModel model;
  FitReport report;
};

/// Packs the posterior over the final active sets.
inline FittedModel make_fitted_model(const VariationalState& s, const Standardizer& st,
                                     const std::vector<std::string>& names, const Hyperparams& hp,
                                     const FitReport& rep) {
  FittedModel m;
  m.n_features_total = st.size();
  m.feature_names = names;
  m.standardizer = st;
  m.hp = hp;
  m.feature_index = s.active.feature_index;
  m.rv_index = s.active.rv_index;
  m.v_mu = s.v.mu;
  m.v_prec = s.v.prec;
  m.v_mean = s.v.folded_mean;
  m.v_var = s.v.folded_var;
  m.a_mean = s.a.mean;
  m.a_cov = s.a.cov;
  m.X_tilde = s.X_tilde;
  m.b_mean = s.b.mean;
  m.b_var = s.b.var;
  m.tau = s.tau;
  m.iterations = rep.iterations_run;
  m.converged = rep.converged;
  m.final_elbo = rep.final_elbo;
  m.refresh();
  return m;
}

/// Standardizes with training statistics, runs coordinate ascent and packs the
/// result. Relevance-vector candidates are the training rows.
inline TrainResult train(const Dataset& data, const Hyperparams& hp, const FitOptions& opt = {}) {
  const Standardizer st = fit_standardizer(data.features);
  const DesignMatrices dm = DesignMatrices::from_training(apply_standardizer(st, data.features), data.labels);
  FitResult fr = fit_state(dm, hp, opt);
  FittedModel m = make_fitted_model(fr.state, st, data.feature_names, hp, fr.report);
  return {std::move(m), std::move(fr.report)};
}

}  // namespace rfvm
