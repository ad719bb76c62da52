#pragma once

#include "jsqr/copulas.hpp"
#include "jsqr/kernels.hpp"
#include "jsqr/quantile_curves.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace jsqr {

/// Affine map of each predictor onto [-1,1] from its training range.
struct RescaleRecord {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static RescaleRecord from(const Eigen::MatrixXd& x_raw);
  int p() const { return static_cast<int>(lo.size()); }
  /// x_r = a x + b
  Eigen::VectorXd scale() const;
  Eigen::VectorXd shift() const;
  Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
};

struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x_raw;  // n x p
  Eigen::MatrixXd x;      // n x p, rescaled
  Locations s;
  RescaleRecord rescale;
  std::vector<std::string> predictor_names;
  bool clamped = false;  // some rescaled entries were pulled back into [-1,1]

  Eigen::Index n() const { return y.size(); }
  int p() const { return static_cast<int>(x_raw.cols()); }
};

/// Builds a dataset rescaled by its own predictor ranges.
Dataset make_dataset(const Eigen::VectorXd& y, const Eigen::MatrixXd& x_raw, const Locations& s);
/// Builds a dataset rescaled by a given record (held-out data). Entries
/// leaving [-1,1] are clamped and flagged.
Dataset make_dataset(const Eigen::VectorXd& y, const Eigen::MatrixXd& x_raw, const Locations& s,
                     const RescaleRecord& record);

/// Marginal part of the likelihood for fixed curves.
struct MarginalEval {
  Eigen::VectorXd u;       // tau_{x_i}(y_i)
  Eigen::VectorXd log_fy;  // log f_Y(y_i | x_i)
  double sum = 0.0;
  bool valid = true;
};

MarginalEval evaluate_marginal(const CoefficientCurves& curves, const Dataset& data);

struct LikelihoodResult {
  double loglik = 0.0;
  double marginal = 0.0;
  double copula = 0.0;
  Eigen::VectorXd u;
};

/// Full log-likelihood: sum of log f_Y plus the copula log-density of u.
/// Returns loglik = -inf for parameters whose curves are invalid.
LikelihoodResult log_likelihood(const Dataset& data, const QuantileCurveParams& curve_params,
                                const CopulaParams& copula, const BaseDistribution& base,
                                const CorrelationCache& cache);

/// Conditional log-likelihood terms given the latent process: log f_Y(y_i|x_i)
/// minus log dh at (s_i, v_i).
Eigen::VectorXd per_observation_loglik(const Dataset& data, const QuantileCurveParams& curve_params,
                                       const CopulaParams& copula, const LatentField& latents,
                                       const BaseDistribution& base);
Eigen::VectorXd per_observation_loglik(const MarginalEval& marginal, const CopulaParams& copula,
                                       const LatentField& latents);

}  // namespace jsqr
