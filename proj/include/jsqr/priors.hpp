#pragma once

#include "jsqr/copulas.hpp"
#include "jsqr/quantile_curves.hpp"

#include <Eigen/Dense>

#include <string>

namespace jsqr {

enum class AlphaPrior { uniform, beta, truncated };

AlphaPrior parse_alpha_prior(const std::string& name);
std::string to_string(AlphaPrior prior);

struct PriorSpec {
  double kappa2_shape = 0.1;
  double kappa2_rate = 0.1;
  // Beta prior on rho = exp(-0.1^2 lambda^2), the correlation of omega at lag 0.1
  double rho_a = 6.0;
  double rho_b = 4.0;
  AlphaPrior alpha_prior = AlphaPrior::uniform;
  double alpha_a = 1.0;  // beta shape parameters
  double alpha_b = 1.0;
  double alpha_lo = 0.0;  // truncated uniform support
  double alpha_hi = 1.0;
  double psi_lo = kPsiMin;
  double psi_hi = kPsiMax;

  void validate() const;
  double log_alpha_density(double alpha) const;
};

/// Hyperparameters of the omega GP priors, one entry per omega function
/// (index 0 is omega0).
struct GpHyper {
  Eigen::VectorXd kappa2;
  Eigen::VectorXd rho;  // exp(-0.01 lambda^2)
};

double lambda_from_rho(double rho);
double rho_from_lambda(double lambda);

/// log N(values; 0, kappa2 C(lambda)) without the 2 pi constant, C being the
/// jittered SE gram matrix over the knots.
double gp_log_density(const Eigen::VectorXd& values, const Eigen::VectorXd& knots, double kappa2,
                      double lambda);

/// Log prior density in the natural parametrization: GP terms, inverse-gamma
/// kappa2, beta on rho, 1/sigma^2, the alpha prior, 1/G for phi and the uniform
/// psi prior (t copula only). The lambda values inside `curve` must agree with
/// hyper.rho. Returns -inf outside the support.
double log_prior(const QuantileCurveParams& curve, const CopulaParams& copula, const GpHyper& hyper,
                 const PriorSpec& spec, int G, const CurveGrid& grid = CurveGrid::standard());

}  // namespace jsqr
