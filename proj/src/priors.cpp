#include "jsqr/priors.hpp"

#include "jsqr/errors.hpp"

#include <cmath>
#include <limits>

namespace jsqr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace

AlphaPrior parse_alpha_prior(const std::string& name) {
  if (name == "uniform") return AlphaPrior::uniform;
  if (name == "beta") return AlphaPrior::beta;
  if (name == "truncated") return AlphaPrior::truncated;
  throw DomainError("unknown alpha prior '" + name + "'");
}

std::string to_string(AlphaPrior prior) {
  switch (prior) {
    case AlphaPrior::uniform: return "uniform";
    case AlphaPrior::beta: return "beta";
    case AlphaPrior::truncated: return "truncated";
  }
  return "?";
}

void PriorSpec::validate() const {
  if (!(kappa2_shape > 0 && kappa2_rate > 0 && rho_a > 0 && rho_b > 0 && alpha_a > 0 && alpha_b > 0))
    throw DomainError("prior hyperparameters must be positive");
  if (!(alpha_lo >= 0.0 && alpha_hi <= 1.0 && alpha_lo < alpha_hi))
    throw DomainError("truncated alpha prior needs 0 <= lo < hi <= 1");
  if (!(psi_lo >= kPsiMin && psi_hi <= kPsiMax && psi_lo < psi_hi))
    throw DomainError("psi prior bounds must lie within [2,20]");
}

double PriorSpec::log_alpha_density(double alpha) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) return kNegInf;
  switch (alpha_prior) {
    case AlphaPrior::uniform: return 0.0;
    case AlphaPrior::beta:
      return (alpha_a - 1.0) * std::log(alpha) + (alpha_b - 1.0) * std::log1p(-alpha) -
             log_beta_fn(alpha_a, alpha_b);
    case AlphaPrior::truncated:
      if (alpha < alpha_lo || alpha > alpha_hi) return kNegInf;
      return -std::log(alpha_hi - alpha_lo);
  }
  return kNegInf;
}

double lambda_from_rho(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("rho must lie in (0,1)");
  return std::sqrt(-std::log(rho) / 0.01);
}

double rho_from_lambda(double lambda) { return std::exp(-0.01 * lambda * lambda); }

double gp_log_density(const Eigen::VectorXd& values, const Eigen::VectorXd& knots, double kappa2,
                      double lambda) {
  const Eigen::MatrixXd c = se_gram(knots, lambda, kGpJitter);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) return kNegInf;
  const Eigen::MatrixXd& l = llt.matrixLLT();
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const Eigen::VectorXd r = llt.matrixL().solve(values);
  const double m = static_cast<double>(values.size());
  return -0.5 * (m * std::log(kappa2) + logdet) - 0.5 * r.squaredNorm() / kappa2;
}

double log_prior(const QuantileCurveParams& curve, const CopulaParams& copula, const GpHyper& hyper,
                 const PriorSpec& spec, int G, const CurveGrid& grid) {
  const int p = curve.p();
  if (hyper.kappa2.size() != p + 1 || hyper.rho.size() != p + 1)
    throw DomainError("hyperparameter vectors must have p + 1 entries");

  double lp = 0.0;
  for (int j = 0; j <= p; ++j) {
    const double k2 = hyper.kappa2(j), rho = hyper.rho(j);
    if (!(k2 > 0.0) || !(rho > 0.0 && rho < 1.0)) return kNegInf;
    const Eigen::VectorXd w = j == 0 ? curve.omega0 : Eigen::VectorXd(curve.omega.row(j - 1).transpose());
    lp += gp_log_density(w, grid.knots, k2, lambda_from_rho(rho));
    lp += spec.kappa2_shape * std::log(spec.kappa2_rate) - std::lgamma(spec.kappa2_shape) -
          (spec.kappa2_shape + 1.0) * std::log(k2) - spec.kappa2_rate / k2;
    lp += (spec.rho_a - 1.0) * std::log(rho) + (spec.rho_b - 1.0) * std::log1p(-rho) -
          log_beta_fn(spec.rho_a, spec.rho_b);
  }

  const double s2 = curve.sigma2();
  if (!(s2 > 0.0) || !(curve.sigma_s2 >= 0.0)) return kNegInf;
  lp -= std::log(s2);
  lp += spec.log_alpha_density(copula.alpha);
  if (G < 1) throw DomainError("grid size must be positive");
  lp -= std::log(static_cast<double>(G));
  if (copula.family == CopulaFamily::student_t) {
    if (!(copula.psi > spec.psi_lo && copula.psi < spec.psi_hi)) return kNegInf;
    lp -= std::log(spec.psi_hi - spec.psi_lo);
  }
  return lp;
}

}  // namespace jsqr
