#pragma once

#include <string>

namespace jsqr {

namespace stats {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double norm_pdf(double x);
double norm_logpdf(double x);
double norm_cdf(double x);
/// Inverse of the standard normal CDF. Arguments must lie in (0,1).
double norm_quantile(double p);

double t_pdf(double x, double dof);
double t_logpdf(double x, double dof);
double t_cdf(double x, double dof);
double t_quantile(double p, double dof);

double logistic_pdf(double x);
double logistic_cdf(double x);
double logistic_quantile(double p);

/// Check loss rho_tau(e) = e (tau - 1{e < 0}).
double check_loss(double tau, double residual);

}  // namespace stats

enum class BaseFamily { logistic, student_t, normal };

BaseFamily parse_base_family(const std::string& name);
std::string to_string(BaseFamily family);

/// Base density f0 of the quantile parametrization. All three families are
/// symmetric about zero so tau0 = F0(0) = 1/2.
struct BaseDistribution {
  BaseFamily family = BaseFamily::logistic;
  double dof = 5.0;  // student_t only

  double pdf(double t) const;
  double log_pdf(double t) const;
  double cdf(double t) const;
  double quantile(double u) const;
  /// q0(u) = 1 / f0(F0^{-1}(u))
  double quantile_density(double u) const;
  double tau0() const { return 0.5; }
};

}  // namespace jsqr
