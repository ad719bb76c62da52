#include "jsqr/copulas.hpp"

#include "jsqr/errors.hpp"
#include "jsqr/stats.hpp"

#include <algorithm>
#include <cmath>

namespace jsqr {

namespace {

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0,1]");
}

void require_psi(double psi) {
  if (!(psi > kPsiMin && psi < kPsiMax)) throw DomainError("psi must lie in (2,20)");
}

// Eigenvalues of alpha K + (1 - alpha) I.
Eigen::VectorXd shifted(const Eigen::VectorXd& lambda, double alpha) {
  Eigen::VectorXd e = alpha * lambda.array() + (1.0 - alpha);
  if (e.size() > 0 && !(e.minCoeff() > 0.0))
    throw NumericalError("alpha K + (1 - alpha) I is singular");
  return e;
}

}  // namespace

CopulaFamily parse_copula_family(const std::string& name) {
  if (name == "gaussian" || name == "normal") return CopulaFamily::gaussian;
  if (name == "student_t" || name == "t") return CopulaFamily::student_t;
  throw DomainError("unknown copula family '" + name + "'");
}

std::string to_string(CopulaFamily family) {
  return family == CopulaFamily::gaussian ? "gaussian" : "student_t";
}

void CopulaParams::validate() const {
  require_alpha(alpha);
  if (!(nu > 0.0)) throw DomainError("nu must be positive");
  if (family == CopulaFamily::student_t) require_psi(psi);
}

Eigen::VectorXd latent_scores(const Eigen::VectorXd& u, CopulaFamily family, double psi) {
  Eigen::VectorXd z(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!(u(i) > 0.0 && u(i) < 1.0)) throw DomainError("copula argument outside (0,1)");
    z(i) = family == CopulaFamily::gaussian ? stats::norm_quantile(u(i)) : stats::t_quantile(u(i), psi);
  }
  return z;
}

double marginal_log_sum(const Eigen::VectorXd& z, CopulaFamily family, double psi) {
  if (family == CopulaFamily::gaussian)
    return -0.5 * z.squaredNorm() - static_cast<double>(z.size()) * stats::kLogSqrt2Pi;
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += stats::t_logpdf(z(i), psi);
  return s;
}

double copula_logdensity_projected(CopulaFamily family, const Eigen::VectorXd& y, double marginal_log,
                                   double alpha, double psi, const Eigen::VectorXd& eigenvalues) {
  const Eigen::Index n = y.size();
  if (n <= 1) return 0.0;
  if (alpha == 0.0 && family == CopulaFamily::gaussian) return 0.0;

  double logdet = 0.0, quad = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = alpha * eigenvalues(i) + (1.0 - alpha);
    if (!(e > 0.0)) throw NumericalError("alpha K + (1 - alpha) I is singular");
    logdet += std::log(e);
    quad += y(i) * y(i) / e;
  }
  const double dn = static_cast<double>(n);
  double joint;
  if (family == CopulaFamily::gaussian) {
    joint = -0.5 * logdet - 0.5 * quad - dn * stats::kLogSqrt2Pi;
  } else {
    joint = std::lgamma(0.5 * (psi + dn)) - std::lgamma(0.5 * psi) - 0.5 * dn * std::log(psi * M_PI) -
            0.5 * logdet - 0.5 * (psi + dn) * std::log1p(quad / psi);
  }
  return joint - marginal_log;
}

double gaussian_copula_logdensity(const Eigen::VectorXd& u, double alpha, const SpectralEntry& entry) {
  require_alpha(alpha);
  if (static_cast<std::size_t>(u.size()) != entry.size()) throw DomainError("u and cache sizes differ");
  const Eigen::VectorXd z = latent_scores(u, CopulaFamily::gaussian, 0.0);
  return copula_logdensity_projected(CopulaFamily::gaussian, entry.project(z),
                                     marginal_log_sum(z, CopulaFamily::gaussian, 0.0), alpha, 0.0,
                                     entry.eigenvalues);
}

double t_copula_logdensity(const Eigen::VectorXd& u, double alpha, double psi,
                           const SpectralEntry& entry) {
  require_alpha(alpha);
  require_psi(psi);
  if (static_cast<std::size_t>(u.size()) != entry.size()) throw DomainError("u and cache sizes differ");
  const Eigen::VectorXd z = latent_scores(u, CopulaFamily::student_t, psi);
  return copula_logdensity_projected(CopulaFamily::student_t, entry.project(z),
                                     marginal_log_sum(z, CopulaFamily::student_t, psi), alpha, psi,
                                     entry.eigenvalues);
}

ConditionalMoments conditional_moments_projected(const Eigen::VectorXd& yz, const Eigen::VectorXd& yk,
                                                 double alpha, const Eigen::VectorXd& eigenvalues) {
  require_alpha(alpha);
  ConditionalMoments m;
  m.n = static_cast<std::size_t>(yz.size());
  if (m.n == 0) return m;
  if (alpha == 0.0) {
    m.quad = yz.squaredNorm();
    return m;
  }
  const Eigen::VectorXd e = shifted(eigenvalues, alpha);
  m.quad = (yz.array().square() / e.array()).sum();
  m.mean = alpha * (yk.array() * yz.array() / e.array()).sum();
  const double var = 1.0 - alpha * alpha * (yk.array().square() / e.array()).sum();
  if (var < -1e-10) throw NumericalError("negative conditional variance");
  m.variance = std::max(var, 0.0);
  return m;
}

ConditionalMoments conditional_moments(const Eigen::VectorXd& z, const Eigen::VectorXd& kstar,
                                       double alpha, const SpectralEntry& entry) {
  if (z.size() == 0 || alpha == 0.0) {
    require_alpha(alpha);
    ConditionalMoments m;
    m.n = static_cast<std::size_t>(z.size());
    m.quad = z.squaredNorm();
    return m;
  }
  return conditional_moments_projected(entry.project(z), entry.project(kstar), alpha, entry.eigenvalues);
}

double conditional_level(double tau_star, const ConditionalMoments& m, CopulaFamily family,
                         double psi) {
  if (!(tau_star > 0.0 && tau_star < 1.0)) throw DomainError("tau* must lie in (0,1)");
  const double sd = std::sqrt(m.variance);
  if (family == CopulaFamily::gaussian)
    return stats::norm_cdf(m.mean + sd * stats::norm_quantile(tau_star));
  require_psi(psi);
  const double n = static_cast<double>(m.n);
  const double scale = std::sqrt((psi + m.quad) / (psi + n));
  return stats::t_cdf(m.mean + scale * sd * stats::t_quantile(tau_star, psi + n), psi);
}

namespace {

double conditional_quantile(double tau_star, const Eigen::VectorXd& u, const Eigen::Vector2d& s_star,
                            const CopulaParams& params, const CorrelationCache& cache,
                            CopulaFamily family) {
  CopulaParams p = params;
  p.family = family;
  p.validate();
  if (u.size() == 0) return conditional_level(tau_star, ConditionalMoments{}, family, p.psi);
  const SpectralEntry& entry = cache.entry(p.phi_index);
  const Eigen::VectorXd z = latent_scores(u, family, p.psi);
  const Eigen::VectorXd kstar = matern_cross(cache.locations(), s_star, cache.nu(), entry.phi);
  return conditional_level(tau_star, conditional_moments(z, kstar, p.alpha, entry), family, p.psi);
}

}  // namespace

double conditional_quantile_gaussian(double tau_star, const Eigen::VectorXd& u,
                                     const Eigen::Vector2d& s_star, const CopulaParams& params,
                                     const CorrelationCache& cache) {
  return conditional_quantile(tau_star, u, s_star, params, cache, CopulaFamily::gaussian);
}

double conditional_quantile_t(double tau_star, const Eigen::VectorXd& u,
                              const Eigen::Vector2d& s_star, const CopulaParams& params,
                              const CorrelationCache& cache) {
  return conditional_quantile(tau_star, u, s_star, params, cache, CopulaFamily::student_t);
}

LatentPosterior latent_posterior(const Eigen::VectorXd& z, CopulaFamily family, double alpha, double psi,
                                 const SpectralEntry& entry) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("latent recovery needs 0 < alpha < 1");
  if (family == CopulaFamily::student_t) require_psi(psi);
  if (static_cast<std::size_t>(z.size()) != entry.size()) throw DomainError("z and cache sizes differ");
  const Eigen::VectorXd e = shifted(entry.eigenvalues, alpha);
  const Eigen::VectorXd y = entry.project(z);
  const Eigen::VectorXd al = alpha * entry.eigenvalues;
  LatentPosterior out;
  out.mean = entry.eigenvectors * (al.array() / e.array() * y.array()).matrix();
  const Eigen::VectorXd var = al.array() * (1.0 - alpha) / e.array();
  out.cov = entry.eigenvectors * var.asDiagonal() * entry.eigenvectors.transpose();
  if (family == CopulaFamily::student_t) {
    out.gamma_shape = 0.5 * (psi + static_cast<double>(z.size()));
    out.gamma_rate = 0.5 * (psi + (y.array().square() / e.array()).sum());
  }
  return out;
}

LatentField recover_latents(const Eigen::VectorXd& z, CopulaFamily family, double alpha, double psi,
                            const SpectralEntry& entry, std::mt19937_64& rng) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("latent recovery needs 0 < alpha < 1");
  if (family == CopulaFamily::student_t) require_psi(psi);
  if (static_cast<std::size_t>(z.size()) != entry.size()) throw DomainError("z and cache sizes differ");

  const Eigen::Index n = z.size();
  const Eigen::VectorXd e = shifted(entry.eigenvalues, alpha);
  const Eigen::VectorXd y = entry.project(z);

  LatentField out;
  out.z = z;
  if (family == CopulaFamily::student_t) {
    const double quad = (y.array().square() / e.array()).sum();
    std::gamma_distribution<double> gam(0.5 * (psi + static_cast<double>(n)), 2.0 / (psi + quad));
    out.varphi = gam(rng);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd coef(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double al = alpha * entry.eigenvalues(i);
    const double mean = al / e(i) * y(i);
    const double var = al * (1.0 - alpha) / e(i) / out.varphi;
    coef(i) = mean + std::sqrt(var) * normal(rng);
  }
  out.w = entry.eigenvectors * coef;

  const double scale = std::sqrt(out.varphi / (1.0 - alpha));
  out.eps = (z - out.w) * scale;
  out.v = out.eps.unaryExpr([](double t) { return stats::norm_cdf(t); });
  return out;
}

HMapValue h_map(double w, double alpha, double t, double varphi, double psi) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("h map needs alpha in [0,1)");
  if (!(t > 0.0 && t < 1.0)) throw DomainError("h map argument must lie in (0,1)");
  if (!(varphi > 0.0)) throw DomainError("varphi must be positive");
  const double c = std::sqrt((1.0 - alpha) / varphi);
  const double q = stats::norm_quantile(t);
  const double a = w + c * q;
  HMapValue out;
  if (psi <= 0.0) {
    out.h = stats::norm_cdf(a);
    out.dh = c * std::exp(stats::norm_logpdf(a) - stats::norm_logpdf(q));
  } else {
    out.h = stats::t_cdf(a, psi);
    out.dh = c * std::exp(stats::t_logpdf(a, psi) - stats::norm_logpdf(q));
  }
  return out;
}

double log_h_derivative(double z, double eps, double alpha, double varphi, CopulaFamily family,
                        double psi) {
  const double g = family == CopulaFamily::gaussian ? stats::norm_logpdf(z) : stats::t_logpdf(z, psi);
  return 0.5 * std::log((1.0 - alpha) / varphi) + g - stats::norm_logpdf(eps);
}

}  // namespace jsqr
