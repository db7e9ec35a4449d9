#pragma once

// Probability primitives shared by the inference loop and the predictive
// distribution: folded normal moments/density/CDF, gamma expectations and
// the logistic helpers of the Jaakkola-Jordan bound.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/special_functions/digamma.hpp>

#include "rfvm/error.hpp"

namespace rfvm {

/// Parameters of the underlying normal N(mu, sigma2) whose absolute value is
/// folded-normal distributed. Support of the folded variable is x >= 0.
struct FoldedNormalParams {
  double mu = 0.0;
  double sigma2 = 1.0;

  void validate() const {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2) || !std::isfinite(mu)) {
      throw InvalidParameter("folded normal requires finite mu and sigma2 > 0, got mu=" +
                             std::to_string(mu) + " sigma2=" + std::to_string(sigma2));
    }
  }
};

/// Shape/rate parameterization.
struct GammaParams {
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
      throw InvalidParameter("gamma requires alpha > 0 and beta > 0, got alpha=" +
                             std::to_string(alpha) + " beta=" + std::to_string(beta));
    }
  }
};

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x, double mean, double var) {
  const double z = x - mean;
  return std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

namespace detail {

// Folded mean minus |mu|: sigma * (2 phi(r) - 2 r Phi(-r)) with r = |mu| / sigma.
// Kept separate so the variance avoids the mu^2 - mean^2 cancellation.
inline double folded_excess(double mu, double sigma) {
  const double r = std::abs(mu) / sigma;
  const double two_phi = std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * r * r);
  const double tail = std::erfc(r / std::numbers::sqrt2);  // 2 Phi(-r)
  return sigma * (two_phi - r * tail);
}

}  // namespace detail

/// E|X| for X ~ N(mu, sigma2):
///   sigma sqrt(2/pi) exp(-mu^2 / (2 sigma2)) + mu (1 - 2 Phi(-mu/sigma)).
inline double folded_mean(const FoldedNormalParams& p) {
  p.validate();
  return std::abs(p.mu) + detail::folded_excess(p.mu, std::sqrt(p.sigma2));
}

/// Var|X| = mu^2 + sigma2 - (E|X|)^2, evaluated without cancellation.
inline double folded_variance(const FoldedNormalParams& p) {
  p.validate();
  const double c = detail::folded_excess(p.mu, std::sqrt(p.sigma2));
  return p.sigma2 - c * (2.0 * std::abs(p.mu) + c);
}

/// Density on x >= 0: N(x; mu, sigma2) + N(x; -mu, sigma2).
inline double folded_pdf(double x, const FoldedNormalParams& p) {
  p.validate();
  if (x < 0.0) throw DomainError("folded normal density is only defined for x >= 0");
  return normal_pdf(x, p.mu, p.sigma2) + normal_pdf(x, -p.mu, p.sigma2);
}

/// CDF: (erf((x + mu) / sqrt(2 sigma2)) + erf((x - mu) / sqrt(2 sigma2))) / 2.
/// Returns 0 below the support.
inline double folded_cdf(double x, const FoldedNormalParams& p) {
  p.validate();
  if (x <= 0.0) return 0.0;
  const double s = std::sqrt(2.0 * p.sigma2);
  return 0.5 * (std::erf((x + p.mu) / s) + std::erf((x - p.mu) / s));
}

/// Logistic sigmoid. Never returns exactly 0 so downstream logs stay finite.
inline double sigmoid(double x) {
  double r;
  if (x >= 0.0) {
    r = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    r = e / (1.0 + e);
  }
  return r > 0.0 ? r : std::numeric_limits<double>::denorm_min();
}

/// log(sigmoid(x)), stable for large |x|.
inline double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

/// Quadratic coefficient of the Jaakkola-Jordan bound,
/// lambda(xi) = (sigmoid(xi) - 1/2) / (2 xi) = tanh(xi/2) / (4 xi), with limit 1/8 at 0.
inline double jaakkola_lambda(double xi) {
  const double a = std::abs(xi);
  if (a < 1e-4) return 0.125 * (1.0 - a * a / 12.0);
  return std::tanh(0.5 * a) / (4.0 * a);
}

inline double gamma_mean(const GammaParams& g) {
  g.validate();
  return g.alpha / g.beta;
}

/// E[ln X] = digamma(alpha) - ln(beta).
inline double gamma_expected_log(const GammaParams& g) {
  return boost::math::digamma(g.alpha) - std::log(g.beta);
}

/// Differential entropy alpha - ln(beta) + lgamma(alpha) + (1 - alpha) digamma(alpha).
inline double gamma_entropy(const GammaParams& g) {
  return g.alpha - std::log(g.beta) + std::lgamma(g.alpha) +
         (1.0 - g.alpha) * boost::math::digamma(g.alpha);
}

/// E_q[ln p(x)] for p = Gamma(alpha0, beta0) and q = g.
inline double gamma_expected_log_prior(const GammaParams& g, double alpha0, double beta0) {
  return alpha0 * std::log(beta0) - std::lgamma(alpha0) +
         (alpha0 - 1.0) * gamma_expected_log(g) - beta0 * g.alpha / g.beta;
}

}  // namespace rfvm
