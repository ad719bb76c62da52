#include "jsqr/stats.hpp"

#include "jsqr/errors.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/policies/policy.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <cmath>

namespace jsqr {

namespace {

// Double-precision evaluation without promotion to long double: several times
// faster and accurate to a few ulps, which is all the sampler needs.
using FastPolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>,
                                                 boost::math::policies::promote_float<false>>;
using StudentT = boost::math::students_t_distribution<double, FastPolicy>;

void require_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("probability must lie in (0,1)");
}

void require_dof(double dof) {
  if (!(dof > 0.0) || !std::isfinite(dof)) throw DomainError("degrees of freedom must be positive");
}

}  // namespace

namespace stats {

double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double norm_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_quantile(double p) {
  require_probability(p);
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p, FastPolicy());
}

double t_logpdf(double x, double dof) {
  require_dof(dof);
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * M_PI) -
         0.5 * (dof + 1.0) * std::log1p(x * x / dof);
}

double t_pdf(double x, double dof) { return std::exp(t_logpdf(x, dof)); }

double t_cdf(double x, double dof) {
  require_dof(dof);
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(StudentT(dof), x);
}

double t_quantile(double p, double dof) {
  require_probability(p);
  require_dof(dof);
  return boost::math::quantile(StudentT(dof), p);
}

double logistic_pdf(double x) {
  const double e = std::exp(-std::abs(x));
  return e / ((1.0 + e) * (1.0 + e));
}

double logistic_cdf(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logistic_quantile(double p) {
  require_probability(p);
  return std::log(p) - std::log1p(-p);
}

double check_loss(double tau, double residual) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  return residual * (tau - (residual < 0.0 ? 1.0 : 0.0));
}

}  // namespace stats

BaseFamily parse_base_family(const std::string& name) {
  if (name == "logistic") return BaseFamily::logistic;
  if (name == "student_t" || name == "t") return BaseFamily::student_t;
  if (name == "normal" || name == "gaussian") return BaseFamily::normal;
  throw DomainError("unknown base family '" + name + "'");
}

std::string to_string(BaseFamily family) {
  switch (family) {
    case BaseFamily::logistic: return "logistic";
    case BaseFamily::student_t: return "student_t";
    case BaseFamily::normal: return "normal";
  }
  return "?";
}

double BaseDistribution::pdf(double t) const {
  switch (family) {
    case BaseFamily::logistic: return stats::logistic_pdf(t);
    case BaseFamily::student_t: return stats::t_pdf(t, dof);
    case BaseFamily::normal: return stats::norm_pdf(t);
  }
  return 0.0;
}

double BaseDistribution::log_pdf(double t) const {
  switch (family) {
    case BaseFamily::logistic: {
      const double a = std::abs(t);
      return -a - 2.0 * std::log1p(std::exp(-a));
    }
    case BaseFamily::student_t: return stats::t_logpdf(t, dof);
    case BaseFamily::normal: return stats::norm_logpdf(t);
  }
  return 0.0;
}

double BaseDistribution::cdf(double t) const {
  switch (family) {
    case BaseFamily::logistic: return stats::logistic_cdf(t);
    case BaseFamily::student_t: return stats::t_cdf(t, dof);
    case BaseFamily::normal: return stats::norm_cdf(t);
  }
  return 0.0;
}

double BaseDistribution::quantile(double u) const {
  switch (family) {
    case BaseFamily::logistic: return stats::logistic_quantile(u);
    case BaseFamily::student_t: return stats::t_quantile(u, dof);
    case BaseFamily::normal: return stats::norm_quantile(u);
  }
  return 0.0;
}

double BaseDistribution::quantile_density(double u) const { return 1.0 / pdf(quantile(u)); }

}  // namespace jsqr
