#pragma once

#include "jsqr/kernels.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <string>

namespace jsqr {

enum class CopulaFamily { gaussian, student_t };

CopulaFamily parse_copula_family(const std::string& name);
std::string to_string(CopulaFamily family);

struct CopulaParams {
  CopulaFamily family = CopulaFamily::gaussian;
  double alpha = 0.5;
  std::size_t phi_index = 0;
  double nu = 2.0;
  double psi = 10.0;  // student_t only, restricted to (2, 20)

  void validate() const;
};

constexpr double kPsiMin = 2.0;
constexpr double kPsiMax = 20.0;

/// Latent quantities recovered for one posterior draw.
struct LatentField {
  Eigen::VectorXd z;    // Phi^{-1}(u) or T_psi^{-1}(u)
  Eigen::VectorXd w;    // spatial process at the sites
  Eigen::VectorXd eps;  // standardized pure error, Phi^{-1}(v)
  Eigen::VectorXd v;    // pure-error quantile levels
  double varphi = 1.0;  // gamma mixing variable, 1 for the Gaussian copula
};

/// Latent scores z = G^{-1}(u) under the copula family's univariate margin.
Eigen::VectorXd latent_scores(const Eigen::VectorXd& u, CopulaFamily family, double psi);

/// sum_i log g(z_i) for the univariate margin g (standard normal or t_psi).
double marginal_log_sum(const Eigen::VectorXd& z, CopulaFamily family, double psi);

/// Copula log-density from the spectral projection y = V^T z of the latent
/// scores. `marginal_log` is marginal_log_sum(z). This is the workhorse used by
/// the sampler: for a fixed u it is O(n) per decay value.
double copula_logdensity_projected(CopulaFamily family, const Eigen::VectorXd& y, double marginal_log,
                                   double alpha, double psi, const Eigen::VectorXd& eigenvalues);

double gaussian_copula_logdensity(const Eigen::VectorXd& u, double alpha, const SpectralEntry& entry);
double t_copula_logdensity(const Eigen::VectorXd& u, double alpha, double psi,
                           const SpectralEntry& entry);

/// Moments of Z(s*) | Z under the shifted correlation alpha K + (1 - alpha) I.
struct ConditionalMoments {
  double mean = 0.0;
  double variance = 1.0;
  double quad = 0.0;  // z^T R^{-1} z
  std::size_t n = 0;
};

ConditionalMoments conditional_moments(const Eigen::VectorXd& z, const Eigen::VectorXd& kstar,
                                       double alpha, const SpectralEntry& entry);

/// Same moments from the projections yz = V^T z and yk = V^T k*, so callers
/// predicting many sites can reuse them.
ConditionalMoments conditional_moments_projected(const Eigen::VectorXd& yz, const Eigen::VectorXd& yk,
                                                 double alpha, const Eigen::VectorXd& eigenvalues);
/// Level of the conditional copula quantile at tau_star.
double conditional_level(double tau_star, const ConditionalMoments& m, CopulaFamily family,
                         double psi);

double conditional_quantile_gaussian(double tau_star, const Eigen::VectorXd& u,
                                     const Eigen::Vector2d& s_star, const CopulaParams& params,
                                     const CorrelationCache& cache);
double conditional_quantile_t(double tau_star, const Eigen::VectorXd& u,
                              const Eigen::Vector2d& s_star, const CopulaParams& params,
                              const CorrelationCache& cache);

/// Conditional law of the spatial process given z: W | z, varphi is normal
/// with `mean` and covariance `cov / varphi`; for the t copula varphi | z is
/// Gamma(shape, rate). Gaussian copula: varphi = 1 and the gamma fields are 0.
struct LatentPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double gamma_shape = 0.0;
  double gamma_rate = 0.0;
};
LatentPosterior latent_posterior(const Eigen::VectorXd& z, CopulaFamily family, double alpha, double psi,
                                 const SpectralEntry& entry);

/// Draws (varphi, W) from their conditional posterior given z and forms the
/// pure-error levels. Requires 0 < alpha < 1.
LatentField recover_latents(const Eigen::VectorXd& z, CopulaFamily family, double alpha, double psi,
                            const SpectralEntry& entry, std::mt19937_64& rng);

struct HMapValue {
  double h = 0.0;
  double dh = 0.0;
};

/// h(t) = G(w + sqrt((1 - alpha)/varphi) Phi^{-1}(t)) and dh/dt, with G the
/// standard normal CDF (psi <= 0) or T_psi.
HMapValue h_map(double w, double alpha, double t, double varphi = 1.0, double psi = 0.0);

/// log dh/dt written in terms of the latent score z and standardized error
/// eps = Phi^{-1}(t); stable where t itself would round to 0 or 1.
double log_h_derivative(double z, double eps, double alpha, double varphi, CopulaFamily family,
                        double psi);

}  // namespace jsqr
