#pragma once

// Random but internally consistent variational states and small synthetic
// datasets shared by the unit tests.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "rfvm/rfvm.hpp"

namespace rfvm::test {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double normal() { return normal_(gen_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  MatrixXd normal_matrix(Index r, Index c) {
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = normal();
    return m;
  }
  VectorXd normal_vector(Index n) { return normal_matrix(n, 1).col(0); }
  VectorXd uniform_vector(Index n, double lo, double hi) {
    VectorXd v(n);
    for (Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
    return v;
  }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Labels 1, 0, 1, 0, ...
inline VectorXd alternating_labels(Index n) {
  VectorXd t(n);
  for (Index i = 0; i < n; ++i) t[i] = (i % 2 == 0) ? 1.0 : 0.0;
  return t;
}

/// Positive-definite covariance with eigenvalues bounded away from zero.
inline MatrixXd random_spd(Rng& rng, Index n, double scale = 1.0) {
  const MatrixXd B = rng.normal_matrix(n, n);
  return scale * (B * B.transpose() / static_cast<double>(n) + 0.5 * MatrixXd::Identity(n, n));
}

inline void set_a(VariationalState& s, const VectorXd& mean, const MatrixXd& cov) {
  s.a.mean = mean;
  s.a.cov = cov;
  const Eigen::LLT<MatrixXd> llt(cov);
  s.a.log_det_cov = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  s.a.refresh_second_moment();
}

/// Every factor at a random valid value; caches consistent.
inline VariationalState random_state(Index n, Index nt, Index d, std::uint64_t seed,
                                     const Hyperparams& hp = {}) {
  Rng rng(seed);
  DesignMatrices dm{rng.normal_matrix(n, d), rng.normal_matrix(nt, d), alternating_labels(n)};
  VariationalState s = init_state(dm, hp);
  set_a(s, rng.normal_vector(nt), random_spd(rng, nt));
  for (Index j = 0; j < d; ++j) s.v.set(j, rng.normal(), rng.uniform(0.5, 3.0));
  s.psi = {rng.uniform_vector(nt, 0.5, 2.0), rng.uniform_vector(nt, 0.5, 2.0)};
  s.delta = {rng.uniform_vector(d, 0.5, 2.0), rng.uniform_vector(d, 0.5, 2.0)};
  s.tau = {rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0)};
  s.b = {rng.normal(), rng.uniform(0.2, 1.0)};
  s.y.mean = rng.normal_vector(n);
  s.y.var = rng.uniform_vector(n, 0.2, 1.0);
  s.y.xi = rng.uniform_vector(n, 0.1, 2.0);
  s.refresh_dual_design();
  return s;
}

/// Hyperparameters for fast deterministic fits on small fixtures.
inline Hyperparams quick_hp(bool pruning = true) {
  Hyperparams hp;
  hp.pruning = pruning;
  hp.max_iters = 2000;
  hp.conv_window = 20;
  hp.conv_rel_tol = 1e-8;
  hp.prune_warmup_iters = 20;
  return hp;
}

/// Two well separated Gaussian classes: the first `informative` columns are
/// shifted by +-margin/2, the rest are unit noise.
inline Dataset separable_fixture(Index n, Index d, Index informative, double margin, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.labels = alternating_labels(n);
  ds.features = rng.normal_matrix(n, d);
  for (Index i = 0; i < n; ++i) {
    const double shift = (ds.labels[i] == 1.0 ? 0.5 : -0.5) * margin;
    for (Index j = 0; j < informative; ++j) ds.features(i, j) += shift;
  }
  return ds;
}

/// Fresh empty directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rfvm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double max_rel_diff(const MatrixXd& a, const MatrixXd& b) {
  double m = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) {
      const double scale = std::max(std::abs(a(i, j)), std::abs(b(i, j)));
      if (scale > 0.0) m = std::max(m, std::abs(a(i, j) - b(i, j)) / scale);
    }
  return m;
}

struct ParameterChange {
  double worst = 0.0;
  std::string block;
};

/// Largest relative change between two states over the same active sets.
/// Array blocks use max |change| / max |value|. Location parameters whose
/// value can sit at zero (mu of v, mean of b) are measured against their
/// location plus posterior standard deviation.
inline ParameterChange parameter_change(const VariationalState& s0, const VariationalState& s1) {
  ParameterChange out;
  auto note = [&](const char* name, double r) {
    if (!(r <= out.worst)) {
      out.worst = r;
      out.block = name;
    }
  };
  auto block = [](const MatrixXd& a, const MatrixXd& b) {
    const double scale = a.cwiseAbs().maxCoeff();
    return scale > 0.0 ? (a - b).cwiseAbs().maxCoeff() / scale : (a - b).cwiseAbs().maxCoeff();
  };
  note("a.mean", block(s0.a.mean, s1.a.mean));
  note("a.cov", block(s0.a.cov, s1.a.cov));
  double v_mu = 0.0;
  for (Index j = 0; j < s0.n_features(); ++j) {
    const double sd = 1.0 / std::sqrt(s0.v.prec[j]);
    v_mu = std::max(v_mu, std::abs(s0.v.mu[j] - s1.v.mu[j]) / (std::abs(s0.v.mu[j]) + sd));
  }
  note("v.mu", v_mu);
  note("v.prec", block(s0.v.prec, s1.v.prec));
  note("psi", block(s0.psi.betas, s1.psi.betas));
  note("delta", block(s0.delta.betas, s1.delta.betas));
  note("y.mean", block(s0.y.mean, s1.y.mean));
  note("y.var", block(s0.y.var, s1.y.var));
  note("xi", block(s0.y.xi, s1.y.xi));
  note("tau", std::abs(s0.tau.beta - s1.tau.beta) / s0.tau.beta);
  note("b.mean", std::abs(s0.b.mean - s1.b.mean) / (std::abs(s0.b.mean) + std::sqrt(s0.b.var)));
  note("b.var", std::abs(s0.b.var - s1.b.var) / s0.b.var);
  return out;
}

}  // namespace rfvm::test
