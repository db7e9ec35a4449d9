#pragma once

// Mean-field coordinate ascent for the relevance feature and vector machine.
//
// Model, for sample n with row x_n:
//   y_n = x_n diag(v) X_tilde^T a + b + eps,   eps ~ N(0, 1/tau)
//   p(t_n | y_n) = sigmoid(y_n)^t_n (1 - sigmoid(y_n))^(1 - t_n)
//   a_i ~ N(0, 1/psi_i),  v_d ~ FoldedNormal(0, 1/delta_d),  b ~ N(0, 1)
//   psi, delta, tau ~ Gamma(alpha0, beta0)
// The logistic likelihood is replaced by the Jaakkola-Jordan bound with one
// variational xi_n per sample, which keeps every factor conjugate.
//
// q(v_d) is folded normal: v_d = |w_d| with q(w_d) = N(mu_d, 1/prec_d). The
// evidence lower bound is evaluated in that parameterization, which makes it a
// proper bound on ln p(t | X) with all normalizing constants included.

#include <chrono>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/toms748_solve.hpp>

#include "rfvm/distributions.hpp"
#include "rfvm/error.hpp"
#include "rfvm/model_state.hpp"

namespace rfvm {

struct FitReport {
  std::vector<TraceRecord> trace;
  bool converged = false;
  double final_elbo = 0.0;
  long iterations_run = 0;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Shared expectations

/// x_tilde_d^T <a a^T> x_tilde_d for every active feature.
inline VectorXd feature_quadratic_forms(const VariationalState& s) {
  const MatrixXd SX = s.a.second_moment.selfadjointView<Eigen::Lower>() * s.X_tilde;
  return s.X_tilde.cwiseProduct(SX).colwise().sum().transpose();
}

/// sum_n E[f_n^2] with f_n = x_n diag(v) X_tilde^T a, under the factorized q.
/// Off-diagonal moments of v factorize; the diagonal adds the folded variances.
inline double expected_model_energy(const VariationalState& s, const VectorXd& quad_forms) {
  const MatrixXd RS = s.dual_design * s.a.second_moment;
  const double mean_part = RS.cwiseProduct(s.dual_design).sum();
  const double var_part = (s.v.folded_var.array() * s.col_sq.array() * quad_forms.array()).sum();
  return mean_part + var_part;
}

/// sum_n E[(y_n - f_n - b)^2].
inline double expected_sq_residual(const VariationalState& s, const VectorXd& quad_forms) {
  const VectorXd m = s.model_mean();
  const double n = static_cast<double>(s.n_samples());
  const double sum_y = s.y.mean.sum();
  const double sum_m = m.sum();
  const double sum_y2 = s.y.mean.squaredNorm() + s.y.var.sum();
  return sum_y2 - 2.0 * s.y.mean.dot(m) - 2.0 * s.b.mean * sum_y + 2.0 * s.b.mean * sum_m +
         n * s.b.second_moment() + expected_model_energy(s, quad_forms);
}

// ---------------------------------------------------------------------------
// Factor updates

/// q(y_n) = N(mean_n, var_n) with var_n = 1 / (<tau> + 2 lambda(xi_n)) and
/// mean_n = (t_n - 1/2 + <tau> (m_n + <b>)) var_n.
inline void update_q_y(VariationalState& s) {
  const double tau = gamma_mean(s.tau);
  const VectorXd m = s.model_mean();
  const Index n = s.n_samples();
  for (Index i = 0; i < n; ++i) {
    const double prec = tau + 2.0 * jaakkola_lambda(s.y.xi[i]);
    s.y.var[i] = 1.0 / prec;
    s.y.mean[i] = (s.t[i] - 0.5 + tau * (m[i] + s.b.mean)) / prec;
  }
}

/// xi_n^2 = E[y_n^2].
inline void update_xi(VariationalState& s) {
  s.y.xi = (s.y.mean.array().square() + s.y.var.array()).sqrt();
}

/// Cholesky of `prec` with escalating diagonal jitter (1e-10 trace/n, times 10,
/// at most six attempts).
inline Eigen::LLT<MatrixXd> robust_cholesky(MatrixXd prec, long iteration) {
  Eigen::LLT<MatrixXd> llt(prec);
  if (llt.info() == Eigen::Success) return llt;
  const Index n = prec.rows();
  double jitter = 1e-10 * prec.trace() / static_cast<double>(n);
  if (!(jitter > 0.0)) jitter = 1e-10;
  for (int attempt = 0; attempt < 6; ++attempt) {
    MatrixXd jittered = prec;
    jittered.diagonal().array() += jitter;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) return llt;
    jitter *= 10.0;
  }
  throw NumericalBreakdown("Cholesky of the q(a) precision failed after jitter", iteration);
}

/// q(a) = N(<a>, Sigma_a):
///   Sigma_a^-1 = <tau> sum_n X_tilde diag(x_n) <v v^T> diag(x_n) X_tilde^T + diag(<psi>)
///   <a> = <tau> Sigma_a R^T (<y> - <b>)
inline void update_q_a(VariationalState& s, long iteration = -1) {
  const double tau = gamma_mean(s.tau);
  const Index nt = s.n_rvs();

  MatrixXd prec = MatrixXd::Zero(nt, nt);
  prec.selfadjointView<Eigen::Lower>().rankUpdate(s.dual_design.transpose(), tau);
  const VectorXd w = (s.v.folded_var.array() * s.col_sq.array()).sqrt();
  const MatrixXd weighted = s.X_tilde * w.asDiagonal();
  prec.selfadjointView<Eigen::Lower>().rankUpdate(weighted, tau);
  prec.diagonal() += s.psi.means();
  prec.triangularView<Eigen::StrictlyUpper>() = prec.transpose();

  const Eigen::LLT<MatrixXd> llt = robust_cholesky(std::move(prec), iteration);
  const VectorXd rhs = tau * (s.dual_design.transpose() * (s.y.mean.array() - s.b.mean).matrix());
  s.a.mean = llt.solve(rhs);
  s.a.cov = llt.solve(MatrixXd::Identity(nt, nt));
  s.a.cov = 0.5 * (s.a.cov + s.a.cov.transpose());
  s.a.log_det_cov = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  s.a.refresh_second_moment();
}

/// Gathered statistics of one q(v_d) coordinate update: the bound restricted
/// to q(w_d) is linear * E|w| - prec/2 * E[w^2] + 1/2 ln var + const.
struct VCoordinate {
  double linear;
  double prec;
};

inline double v_block_objective(const VCoordinate& c, double mu, double prec_underlying) {
  const double var = 1.0 / prec_underlying;
  const double fm = folded_mean({mu, var});
  return c.linear * fm - 0.5 * c.prec * (mu * mu + var) - 0.5 * std::log(prec_underlying);
}

struct VBlockSolution {
  double mu;
  double prec;
};

/// Maximizer of `v_block_objective` over (mu, prec). The objective depends on
/// mu only through |mu|, so the solution is reported with mu >= 0.
///
/// At mu = 0 the optimal scale solves P sigma^2 - L sqrt(2/pi) sigma - 1 = 0.
/// For L <= 0 that point is the maximizer (both L E|w| and -P mu^2 / 2 fall
/// as |mu| grows). For L > 0 a Newton search in (mu, s = ln sigma) starts at
/// the closed form; with u = mu / sigma and phi = sqrt(2/pi) exp(-u^2/2),
///   g_mu = L erf(u / sqrt2) - P mu,        g_s = sigma (L phi - P sigma) + 1,
///   g_mumu = L phi / sigma - P,            g_mus = -L phi u,
///   g_ss = L phi sigma (1 + u^2) - 2 P sigma^2.
/// The better of the two candidates is returned unless `start` scores higher.
inline VBlockSolution optimal_v_block(const VCoordinate& c, const VBlockSolution& start) {
  const double L = c.linear, P = c.prec;
  const double k = std::sqrt(2.0 / std::numbers::pi);
  auto g = [&](double mu, double s) {
    const double p = std::exp(-2.0 * s);
    if (!(p > 0.0) || !std::isfinite(1.0 / p) || !std::isfinite(p) || !std::isfinite(mu)) return -std::numeric_limits<double>::infinity();
    return v_block_objective(c, mu, p);
  };

  const double root = std::sqrt(L * L * k * k + 4.0 * P);
  const double sigma0 = L > 0.0 ? (L * k + root) / (2.0 * P) : 2.0 / (root - L * k);
  VBlockSolution best{0.0, 1.0 / (sigma0 * sigma0)};
  double best_val = v_block_objective(c, best.mu, best.prec);

  if (L > 0.0) {
    double mu = L / P, s = -0.5 * std::log(P);
    double val = g(mu, s);
    for (int it = 0; it < 100; ++it) {
      const double sigma = std::exp(s), u = mu / sigma;
      const double phi = k * std::exp(-0.5 * u * u);
      const double g1 = L * std::erf(u / std::numbers::sqrt2) - P * mu;
      const double g2 = sigma * (L * phi - P * sigma) + 1.0;
      double h11 = L * phi / sigma - P, h12 = -L * phi * u;
      double h22 = L * phi * sigma * (1.0 + u * u) - 2.0 * P * sigma * sigma;
      // Shift the Hessian until it is negative definite.
      const double top = 0.5 * (h11 + h22) + std::sqrt(0.25 * (h11 - h22) * (h11 - h22) + h12 * h12);
      if (top >= 0.0) {
        const double shift = top + 1e-8 * (std::abs(h11) + std::abs(h22) + 1.0);
        h11 -= shift;
        h22 -= shift;
      }
      const double det = h11 * h22 - h12 * h12;
      const double dmu = -(h22 * g1 - h12 * g2) / det, ds = -(h11 * g2 - h12 * g1) / det;
      // Newton decrement: predicted gain of the full step.
      if (g1 * dmu + g2 * ds <= 1e-13 * (std::abs(val) + 1.0)) {
        // The remaining gain is at round-off level; finish without a line search.
        mu = std::abs(mu + dmu);
        s += ds;
        val = g(mu, s);
        break;
      }
      double step = 1.0, next = g(mu + dmu, s + ds);
      while (!(next >= val) && step > 1e-10) {
        step *= 0.5;
        next = g(mu + step * dmu, s + step * ds);
      }
      if (!(next >= val)) break;
      mu = std::abs(mu + step * dmu);
      s += step * ds;
      val = next;
    }
    if (val > best_val) {
      best = {mu, std::exp(-2.0 * s)};
      best_val = val;
    }
  }
  if (!(best_val >= v_block_objective(c, start.mu, start.prec))) best = start;
  return best;
}

struct VSweepStats {
  Index rejected = 0;
};

/// Gauss-Seidel sweep over active features. For coordinate d:
///   prec_d   = <tau> (x_tilde_d^T <aa^T> x_tilde_d) sum_n x_{n,d}^2 + <delta_d>
///   linear_d = <tau> [ (x_tilde_d^T <a>) x_d^T (<y> - <b>)
///                      - sum_n x_{n,d} sum_{d' != d} <v_d'> x_{n,d'} x_tilde_d'^T <aa^T> x_tilde_d ]
///   mu_d     = linear_d / prec_d
/// Features are visited in blocks. The cross term reads the dual design as it
/// stood at the start of the block plus the exact correction for coordinates
/// already updated inside it, so every coordinate sees fresh folded means; the
/// dual design is then corrected by one rank-block product.
inline VSweepStats update_q_v_sweep(VariationalState& s, VUpdateRule rule = VUpdateRule::exact) {
  constexpr Index kBlock = 64;
  VSweepStats stats;
  const double tau = gamma_mean(s.tau);
  const Index nd = s.n_features();
  s.refresh_dual_design();

  const MatrixXd SX = s.a.second_moment.selfadjointView<Eigen::Lower>() * s.X_tilde;
  const VectorXd proj_a = s.X_tilde.transpose() * s.a.mean;
  const VectorXd proj_y = s.X.transpose() * (s.y.mean.array() - s.b.mean).matrix();
  const VectorXd delta_mean = s.delta.means();

  for (Index start = 0; start < nd; start += kBlock) {
    const Index nb = std::min(kBlock, nd - start);
    const auto XB = s.X.middleCols(start, nb);
    const auto XtB = s.X_tilde.middleCols(start, nb);
    const MatrixXd P = XB.transpose() * s.dual_design;            // x_d^T R at block start
    const MatrixXd G = XB.transpose() * XB;                       // x_d^T x_j
    const MatrixXd Q = XtB.transpose() * SX.middleCols(start, nb);  // x_tilde_j^T <aa^T> x_tilde_d
    VectorXd change = VectorXd::Zero(nb);

    for (Index k = 0; k < nb; ++k) {
      const Index d = start + k;
      const auto g = SX.col(d);
      const double energy = s.col_sq[d] * s.X_tilde.col(d).dot(g);
      double xRg = P.row(k).dot(g);
      for (Index j = 0; j < k; ++j) xRg += change[j] * G(k, j) * Q(j, k);
      const double cross = xRg - s.v.folded_mean[d] * energy;

      const VCoordinate c{tau * (proj_a[d] * proj_y[d] - cross), tau * energy + delta_mean[d]};
      if (!(c.prec > 0.0) || !std::isfinite(c.prec) || !std::isfinite(c.linear)) {
        throw NumericalBreakdown("non-positive precision in q(v) update for feature " + std::to_string(d));
      }
      VBlockSolution next{c.linear / c.prec, c.prec};
      if (rule == VUpdateRule::exact) {
        next = optimal_v_block(c, {s.v.mu[d], s.v.prec[d]});
      } else if (rule == VUpdateRule::guarded &&
                 v_block_objective(c, next.mu, next.prec) < v_block_objective(c, s.v.mu[d], s.v.prec[d])) {
        ++stats.rejected;
        continue;
      }
      const double old_mean = s.v.folded_mean[d];
      s.v.set(d, next.mu, next.prec);
      change[k] = s.v.folded_mean[d] - old_mean;
    }
    if (!change.isZero(0.0)) s.dual_design.noalias() += XB * change.asDiagonal() * XtB.transpose();
  }
  return stats;
}

/// q(b) = N(<b>, var_b): var_b = 1 / (N <tau> + 1), <b> = <tau> (sum <y> - sum m) var_b.
inline void update_q_b(VariationalState& s) {
  const double tau = gamma_mean(s.tau);
  const double n = static_cast<double>(s.n_samples());
  s.b.var = 1.0 / (n * tau + 1.0);
  s.b.mean = tau * (s.y.mean.sum() - s.model_mean().sum()) * s.b.var;
}

/// q(tau) = Gamma(alpha0 + N/2, beta0 + E[sum of squared residuals] / 2).
inline void update_q_tau(VariationalState& s, const Hyperparams& hp) {
  const double q = expected_sq_residual(s, feature_quadratic_forms(s));
  const double beta = hp.beta0_tau + 0.5 * q;
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw NumericalBreakdown("q(tau) rate is not positive; caches are inconsistent");
  }
  s.tau = {hp.alpha0_tau + 0.5 * static_cast<double>(s.n_samples()), beta};
}

/// Log of the scale c chosen by `rescale_v_a`.
///
/// Replacing q(w) by the law of c w and q(a) by the law of a / c leaves every
/// expectation of the likelihood unchanged. With psi and delta at their
/// optimal factors the bound then varies in t = ln c as
///   h(t) = -k_psi sum_i ln(b_psi + A_i e^{-2t} / 2)
///          -k_delta sum_d ln(b_delta + B_d e^{2t} / 2) + (D - Ñ) t,
/// with A_i = <a_i^2>, B_d = <v_d^2>, k = alpha0 + 1/2. h is concave in t and
/// its derivative changes sign, so the maximizer is found by bracketing.
inline double optimal_log_scale(const VariationalState& s, const Hyperparams& hp) {
  const VectorXd A = s.a.second_moment.diagonal();
  const VectorXd& B = s.v.second_moment;
  const double k_psi = hp.alpha0_psi + 0.5, k_delta = hp.alpha0_delta + 0.5;
  const double offset = static_cast<double>(s.n_features()) - static_cast<double>(s.n_rvs());
  auto slope = [&](double t) {
    double g = offset;
    for (Index i = 0; i < A.size(); ++i) {
      const double r = 0.5 * A[i] * std::exp(-2.0 * t);
      g += 2.0 * k_psi * r / (hp.beta0_psi + r);
    }
    for (Index d = 0; d < B.size(); ++d) {
      const double r = 0.5 * B[d] * std::exp(2.0 * t);
      g -= 2.0 * k_delta * r / (hp.beta0_delta + r);
    }
    return g;
  };
  double lo = -1.0, hi = 1.0;
  while (slope(lo) < 0.0 && lo > -200.0) lo *= 2.0;
  while (slope(hi) > 0.0 && hi < 200.0) hi *= 2.0;
  boost::math::tools::eps_tolerance<double> tol(50);
  std::uintmax_t max_iter = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(slope, lo, hi, tol, max_iter);
  return 0.5 * (a + b);
}

/// Joint rescaling along the direction in which the likelihood is flat:
/// mu_d -> c mu_d, prec_d -> prec_d / c^2, <a> -> <a> / c, Sigma_a -> Sigma_a / c^2.
/// Followed by the psi and delta updates this never lowers the bound.
inline void rescale_v_a(VariationalState& s, const Hyperparams& hp) {
  const double t = optimal_log_scale(s, hp);
  if (t == 0.0 || !std::isfinite(t)) return;
  const double c = std::exp(t);
  for (Index d = 0; d < s.n_features(); ++d) s.v.set(d, c * s.v.mu[d], s.v.prec[d] / (c * c));
  s.a.mean /= c;
  s.a.cov /= c * c;
  s.a.log_det_cov -= 2.0 * static_cast<double>(s.n_rvs()) * t;
  s.a.refresh_second_moment();
  s.dual_design *= c;
}

/// q(psi_i) = Gamma(alpha0 + 1/2, beta0 + <a_i^2> / 2).
inline void update_q_psi(VariationalState& s, const Hyperparams& hp) {
  const Index nt = s.n_rvs();
  s.psi.alphas = VectorXd::Constant(nt, hp.alpha0_psi + 0.5);
  s.psi.betas = (hp.beta0_psi + 0.5 * s.a.second_moment.diagonal().array()).matrix();
}

/// q(delta_d) = Gamma(alpha0 + 1/2, beta0 + <v_d^2> / 2).
inline void update_q_delta(VariationalState& s, const Hyperparams& hp) {
  const Index nd = s.n_features();
  s.delta.alphas = VectorXd::Constant(nd, hp.alpha0_delta + 0.5);
  s.delta.betas = (hp.beta0_delta + 0.5 * s.v.second_moment.array()).matrix();
}

// ---------------------------------------------------------------------------
// Evidence lower bound

/// Terms of the bound. Every normalizing constant is kept, so `total()` is a
/// lower bound on ln p(t | X) and traces are comparable across runs.
struct ElboTerms {
  double likelihood_bound = 0.0;  // E[ln h(y, xi)]
  double latent = 0.0;            // E[ln p(y | a, v, b, tau)]
  double prior_a = 0.0, prior_psi = 0.0;
  double prior_v = 0.0, prior_delta = 0.0;
  double prior_tau = 0.0, prior_b = 0.0;
  double entropy_y = 0.0, entropy_a = 0.0, entropy_v = 0.0, entropy_b = 0.0;
  double entropy_psi = 0.0, entropy_delta = 0.0, entropy_tau = 0.0;

  double total() const {
    return likelihood_bound + latent + prior_a + prior_psi + prior_v + prior_delta + prior_tau +
           prior_b + entropy_y + entropy_a + entropy_v + entropy_b + entropy_psi + entropy_delta +
           entropy_tau;
  }
};

inline ElboTerms elbo_terms(const VariationalState& s, const Hyperparams& hp) {
  constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2 pi)
  constexpr double kLog2PiE = kLog2Pi + 1.0;
  const double n = static_cast<double>(s.n_samples());
  const double nt = static_cast<double>(s.n_rvs());
  const double nd = static_cast<double>(s.n_features());
  const double tau = gamma_mean(s.tau);
  const double elog_tau = gamma_expected_log(s.tau);

  ElboTerms e;
  for (Index i = 0; i < s.n_samples(); ++i) {
    const double xi = s.y.xi[i];
    const double ey2 = s.y.mean[i] * s.y.mean[i] + s.y.var[i];
    e.likelihood_bound += log_sigmoid(xi) + s.y.mean[i] * s.t[i] - 0.5 * (s.y.mean[i] + xi) -
                          jaakkola_lambda(xi) * (ey2 - xi * xi);
    e.entropy_y += 0.5 * (kLog2PiE + std::log(s.y.var[i]));
  }

  const VectorXd quad = feature_quadratic_forms(s);
  e.latent = -0.5 * n * kLog2Pi + 0.5 * n * elog_tau - 0.5 * tau * expected_sq_residual(s, quad);

  for (Index i = 0; i < s.n_rvs(); ++i) {
    const GammaParams g = s.psi.at(i);
    e.prior_a += 0.5 * gamma_expected_log(g) - 0.5 * (g.alpha / g.beta) * s.a.second_moment(i, i);
    e.prior_psi += gamma_expected_log_prior(g, hp.alpha0_psi, hp.beta0_psi);
    e.entropy_psi += gamma_entropy(g);
  }
  e.prior_a -= 0.5 * nt * kLog2Pi;
  e.entropy_a = 0.5 * nt * kLog2PiE + 0.5 * s.a.log_det_cov;

  for (Index d = 0; d < s.n_features(); ++d) {
    const GammaParams g = s.delta.at(d);
    e.prior_v += 0.5 * gamma_expected_log(g) - 0.5 * (g.alpha / g.beta) * s.v.second_moment[d];
    e.prior_delta += gamma_expected_log_prior(g, hp.alpha0_delta, hp.beta0_delta);
    e.entropy_delta += gamma_entropy(g);
    e.entropy_v += 0.5 * (kLog2PiE - std::log(s.v.prec[d]));
  }
  e.prior_v -= 0.5 * nd * kLog2Pi;

  e.prior_tau = gamma_expected_log_prior(s.tau, hp.alpha0_tau, hp.beta0_tau);
  e.entropy_tau = gamma_entropy(s.tau);
  e.prior_b = -0.5 * kLog2Pi - 0.5 * s.b.second_moment();
  e.entropy_b = 0.5 * (kLog2PiE + std::log(s.b.var));
  return e;
}

inline double compute_elbo(const VariationalState& s, const Hyperparams& hp) {
  const ElboTerms e = elbo_terms(s, hp);
  const std::pair<const char*, double> named[] = {
      {"likelihood bound", e.likelihood_bound}, {"latent likelihood", e.latent},
      {"a prior", e.prior_a},                   {"psi prior", e.prior_psi},
      {"v prior", e.prior_v},                   {"delta prior", e.prior_delta},
      {"tau prior", e.prior_tau},               {"b prior", e.prior_b},
      {"y entropy", e.entropy_y},               {"a entropy", e.entropy_a},
      {"v entropy", e.entropy_v},               {"b entropy", e.entropy_b},
      {"psi entropy", e.entropy_psi},           {"delta entropy", e.entropy_delta},
      {"tau entropy", e.entropy_tau}};
  for (const auto& [name, value] : named) {
    if (!std::isfinite(value)) throw NumericalBreakdown(std::string("non-finite ELBO term: ") + name);
  }
  return e.total();
}

// ---------------------------------------------------------------------------
// Outer loop

/// Window convergence rule L_{T-W} > L_T (1 - tol), stated with |L_T| so that
/// it reads "relative improvement over the window below tol" for either sign
/// of the bound (identical to the plain form when L_T >= 0).
inline bool window_rule_holds(double elbo_then, double elbo_now, double rel_tol) {
  return elbo_then > elbo_now - rel_tol * std::abs(elbo_now);
}

/// Applies one factor update.
inline void apply_update(VariationalState& s, const Hyperparams& hp, Factor f, long iteration) {
  switch (f) {
    case Factor::y: update_q_y(s); break;
    case Factor::xi: update_xi(s); break;
    case Factor::a: update_q_a(s, iteration); break;
    case Factor::v: update_q_v_sweep(s, hp.v_rule); break;
    case Factor::b: update_q_b(s); break;
    case Factor::tau: update_q_tau(s, hp); break;
    case Factor::scale: rescale_v_a(s, hp); break;
    case Factor::psi: update_q_psi(s, hp); break;
    case Factor::delta: update_q_delta(s, hp); break;
  }
}

/// One pass over every factor in `hp.update_order`.
inline void full_sweep(VariationalState& s, const Hyperparams& hp, long iteration = -1) {
  for (Factor f : hp.update_order) apply_update(s, hp, f, iteration);
}

/// Optional per-iteration observer (trace streaming, progress).
using IterationCallback = std::function<void(const VariationalState&, const TraceRecord&)>;

struct FitOptions {
  IterationCallback on_iteration;
};

struct FitResult {
  VariationalState state;
  FitReport report;
};

/// Coordinate ascent until the window rule holds or max_iters. Pruning runs
/// every iteration after the warmup; when it removes something the convergence
/// window restarts, so compared bounds always share one active set.
inline FitResult fit_state(const DesignMatrices& data, const Hyperparams& hp, const FitOptions& opt = {}) {
  FitResult out{init_state(data, hp), {}};
  VariationalState& s = out.state;
  FitReport& rep = out.report;
  const auto start = std::chrono::steady_clock::now();
  long window_start = 1;

  for (long it = 1; it <= hp.max_iters; ++it) {
    full_sweep(s, hp, it);

    TraceRecord rec;
    rec.iteration = it;
    if (hp.pruning && it > hp.prune_warmup_iters) {
      const PrunePlan plan = plan_pruning(s, hp);
      if (plan.result.changed()) {
        rec.elbo_before_prune = compute_elbo(s, hp);
        const PruneResult res = apply_pruning(s, hp);
        for (const auto& w : res.warnings) rep.warnings.push_back("iteration " + std::to_string(it) + ": " + w);
        rec.pruned = true;
        window_start = it;
      }
    }
    try {
      rec.elbo = compute_elbo(s, hp);
    } catch (const NumericalBreakdown& e) {
      throw NumericalBreakdown(e.what(), it);
    }
    rec.n_active_features = s.n_features();
    rec.n_active_rvs = s.n_rvs();
    rec.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rep.trace.push_back(rec);
    if (opt.on_iteration) opt.on_iteration(s, rec);

    rep.iterations_run = it;
    rep.final_elbo = rec.elbo;
    const long then = it - hp.conv_window;
    if (then >= window_start &&
        window_rule_holds(rep.trace[static_cast<std::size_t>(then - 1)].elbo, rec.elbo, hp.conv_rel_tol)) {
      rep.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace rfvm
