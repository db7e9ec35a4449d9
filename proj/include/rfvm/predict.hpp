#pragma once

// Posterior predictive distribution of the latent output and the class
// probability obtained from it with the probit-matched sigmoid.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "rfvm/distributions.hpp"
#include "rfvm/error.hpp"
#include "rfvm/model.hpp"

namespace rfvm {

struct PredictiveMoments {
  double mean_ystar = 0.0;
  double var_ystar = 0.0;
};

/// Moments of y* for a row already standardized and restricted to the active
/// features. With h = X_tilde diag(<v>) x*:
///   mean = h^T <a> + <b>
///   var  = h^T Sigma_a h + 1/<tau> + var_b + sum_d x*_d^2 Var(v_d) x_tilde_d^T <aa^T> x_tilde_d
inline PredictiveMoments predict_latent_active(const FittedModel& m, const VectorXd& x_active) {
  const VectorXd h = m.X_tilde * m.v_mean.cwiseProduct(x_active);
  PredictiveMoments out;
  out.mean_ystar = h.dot(m.a_mean) + m.b_mean;
  const double v_term = (x_active.array().square() * m.v_var.array() * m.quad_a.array()).sum();
  out.var_ystar = h.dot(m.a_cov * h) + 1.0 / m.tau_mean() + m.b_var + v_term;
  return out;
}

/// Moments of y* for a raw input row of the original width D.
inline PredictiveMoments predict_latent(const FittedModel& m, const VectorXd& x_star) {
  if (x_star.size() != m.n_features_total) {
    throw ShapeError("input has " + std::to_string(x_star.size()) + " features, model expects " +
                     std::to_string(m.n_features_total));
  }
  const VectorXd z = m.standardizer.transform_row(x_star);
  return predict_latent_active(m, z(m.feature_index));
}

/// sigmoid(mean / sqrt(1 + pi/8 var)).
inline double probit_matched_probability(const PredictiveMoments& p) {
  return sigmoid(p.mean_ystar / std::sqrt(1.0 + std::numbers::pi / 8.0 * p.var_ystar));
}

inline double predict_proba(const FittedModel& m, const VectorXd& x_star) {
  return probit_matched_probability(predict_latent(m, x_star));
}

/// 1 iff the probability reaches the threshold (ties go to class 1).
inline int predict_label(const FittedModel& m, const VectorXd& x_star, double threshold = 0.5) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidParameter("threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  return predict_proba(m, x_star) >= threshold ? 1 : 0;
}

/// Row-wise predictive moments for a raw matrix.
inline std::vector<PredictiveMoments> predict_latent_batch(const FittedModel& m, const MatrixXd& X) {
  if (X.cols() != m.n_features_total) {
    throw ShapeError("input has " + std::to_string(X.cols()) + " features, model expects " +
                     std::to_string(m.n_features_total));
  }
  std::vector<PredictiveMoments> out(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = predict_latent(m, X.row(i).transpose());
  return out;
}

inline VectorXd predict_proba_batch(const FittedModel& m, const MatrixXd& X) {
  const auto moments = predict_latent_batch(m, X);
  VectorXd p(X.rows());
  for (Index i = 0; i < X.rows(); ++i) p[i] = probit_matched_probability(moments[static_cast<std::size_t>(i)]);
  return p;
}

inline double accuracy(const FittedModel& m, const Dataset& data, double threshold = 0.5) {
  const VectorXd p = predict_proba_batch(m, data.features);
  Index correct = 0;
  for (Index i = 0; i < p.size(); ++i) correct += ((p[i] >= threshold ? 1.0 : 0.0) == data.labels[i]) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(p.size());
}

struct RankedFeature {
  Index index;               // raw column
  double weight;             // <v_d> folded mean times (X_tilde^T <a>)_d
  double weight_underlying;  // same with the underlying normal mean mu_d
};

/// Feature weights w = diag(<v>) X_tilde^T <a> over the active set, sorted by
/// descending signed weight; ties keep raw column order.
inline std::vector<RankedFeature> rank_features(const FittedModel& m) {
  std::vector<RankedFeature> out;
  out.reserve(static_cast<std::size_t>(m.n_active_features()));
  for (Index j = 0; j < m.n_active_features(); ++j) {
    out.push_back({m.feature_index[static_cast<std::size_t>(j)], m.v_mean[j] * m.proj_a[j], m.v_mu[j] * m.proj_a[j]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedFeature& a, const RankedFeature& b) { return a.weight > b.weight; });
  return out;
}

}  // namespace rfvm
