#include "jsqr/likelihood.hpp"

#include "jsqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jsqr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// log of 1e300: a quantile density below 1e-300 is treated as underflow
const double kMaxLogDensity = std::log(1e300);

void check_shapes(const Eigen::VectorXd& y, const Eigen::MatrixXd& x_raw, const Locations& s) {
  if (x_raw.rows() != y.size() || s.rows() != y.size())
    throw DomainError("response, predictor and location row counts differ");
  if (!y.allFinite() || !x_raw.allFinite() || !s.allFinite())
    throw DomainError("dataset contains non-finite entries");
}

}  // namespace

RescaleRecord RescaleRecord::from(const Eigen::MatrixXd& x_raw) {
  RescaleRecord r;
  if (x_raw.rows() == 0) {
    r.lo = -Eigen::VectorXd::Ones(x_raw.cols());
    r.hi = Eigen::VectorXd::Ones(x_raw.cols());
    return r;
  }
  r.lo = x_raw.colwise().minCoeff().transpose();
  r.hi = x_raw.colwise().maxCoeff().transpose();
  for (Eigen::Index j = 0; j < r.lo.size(); ++j)
    if (!(r.hi(j) > r.lo(j)))
      throw DomainError("predictor " + std::to_string(j + 1) + " is constant; cannot rescale");
  return r;
}

Eigen::VectorXd RescaleRecord::scale() const { return 2.0 / (hi - lo).array(); }

Eigen::VectorXd RescaleRecord::shift() const {
  return -((hi + lo).array() / (hi - lo).array()).matrix();
}

Eigen::VectorXd RescaleRecord::apply(const Eigen::VectorXd& raw) const {
  if (raw.size() != lo.size()) throw DomainError("predictor vector has wrong length");
  return (scale().array() * raw.array() + shift().array()).matrix();
}

Dataset make_dataset(const Eigen::VectorXd& y, const Eigen::MatrixXd& x_raw, const Locations& s) {
  check_shapes(y, x_raw, s);
  return make_dataset(y, x_raw, s, RescaleRecord::from(x_raw));
}

Dataset make_dataset(const Eigen::VectorXd& y, const Eigen::MatrixXd& x_raw, const Locations& s,
                     const RescaleRecord& record) {
  check_shapes(y, x_raw, s);
  if (record.p() != x_raw.cols()) throw DomainError("rescale record has wrong predictor count");
  Dataset d;
  d.y = y;
  d.x_raw = x_raw;
  d.s = s;
  d.rescale = record;
  d.x.resize(x_raw.rows(), x_raw.cols());
  const Eigen::VectorXd a = record.scale(), b = record.shift();
  for (Eigen::Index i = 0; i < x_raw.rows(); ++i)
    for (Eigen::Index j = 0; j < x_raw.cols(); ++j) {
      double v = a(j) * x_raw(i, j) + b(j);
      if (v > 1.0 || v < -1.0) {
        // exact endpoints can land a rounding error outside
        if (std::abs(v) > 1.0 + 1e-12) d.clamped = true;
        v = std::clamp(v, -1.0, 1.0);
      }
      d.x(i, j) = v;
    }
  for (int j = 0; j < d.p(); ++j) d.predictor_names.push_back("x" + std::to_string(j + 1));
  return d;
}

MarginalEval evaluate_marginal(const CoefficientCurves& curves, const Dataset& data) {
  const Eigen::Index n = data.n();
  MarginalEval out;
  out.u.resize(n);
  out.log_fy.resize(n);
  // node values for every observation at once: N x n
  const Eigen::MatrixXd q = curves.node_values_rows(data.x);
  Eigen::VectorXd qi;
  Eigen::VectorXd xi;
  for (Eigen::Index i = 0; i < n; ++i) {
    qi = q.col(i);
    xi = data.x.row(i).transpose();
    double lf = 0.0;
    out.u(i) = curves.invert(data.y(i), xi, qi, &lf);
    out.log_fy(i) = lf;
    if (!std::isfinite(lf) || lf > kMaxLogDensity) out.valid = false;
  }
  out.sum = out.valid ? out.log_fy.sum() : kNegInf;
  return out;
}

LikelihoodResult log_likelihood(const Dataset& data, const QuantileCurveParams& curve_params,
                                const CopulaParams& copula, const BaseDistribution& base,
                                const CorrelationCache& cache) {
  copula.validate();
  LikelihoodResult r;
  CoefficientCurves curves;
  try {
    curves = build_coefficient_curves(curve_params, base);
  } catch (const NumericalError&) {
    r.loglik = r.marginal = kNegInf;
    return r;
  }
  const MarginalEval m = evaluate_marginal(curves, data);
  r.u = m.u;
  r.marginal = m.sum;
  if (!m.valid) {
    r.loglik = kNegInf;
    return r;
  }
  if (data.n() > 1 && (copula.alpha > 0.0 || copula.family == CopulaFamily::student_t)) {
    if (cache.n() != static_cast<std::size_t>(data.n()))
      throw DomainError("correlation cache does not match the dataset");
    const SpectralEntry& entry = cache.entry(copula.phi_index);
    const Eigen::VectorXd z = latent_scores(m.u, copula.family, copula.psi);
    r.copula = copula_logdensity_projected(copula.family, entry.project(z),
                                           marginal_log_sum(z, copula.family, copula.psi),
                                           copula.alpha, copula.psi, entry.eigenvalues);
  }
  r.loglik = r.marginal + r.copula;
  return r;
}

Eigen::VectorXd per_observation_loglik(const MarginalEval& marginal, const CopulaParams& copula,
                                       const LatentField& latents) {
  const Eigen::Index n = marginal.u.size();
  Eigen::VectorXd out = marginal.log_fy;
  if (copula.alpha == 0.0 && copula.family == CopulaFamily::gaussian) return out;
  if (latents.z.size() != n || latents.eps.size() != n) throw DomainError("latent field has wrong size");
  for (Eigen::Index i = 0; i < n; ++i)
    out(i) -= log_h_derivative(latents.z(i), latents.eps(i), copula.alpha, latents.varphi, copula.family,
                               copula.psi);
  return out;
}

Eigen::VectorXd per_observation_loglik(const Dataset& data, const QuantileCurveParams& curve_params,
                                       const CopulaParams& copula, const LatentField& latents,
                                       const BaseDistribution& base) {
  const CoefficientCurves curves = build_coefficient_curves(curve_params, base);
  return per_observation_loglik(evaluate_marginal(curves, data), copula, latents);
}

}  // namespace jsqr
