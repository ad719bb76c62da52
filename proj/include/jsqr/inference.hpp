#pragma once

#include "jsqr/mcmc.hpp"

#include <Eigen/Dense>
#include <random>
#include <utility>
#include <vector>

namespace jsqr {

/// Posterior summary of a scalar: mean, median and the equal-tailed 95% interval.
struct QuantileSummary {
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

QuantileSummary summarize(std::vector<double> values);

/// Default summary levels {0.01, 0.05, 0.1, ..., 0.9, 0.95, 0.99}.
std::vector<double> summary_taus();

double check_loss(double tau, double residual);

struct PredictionRequest {
  Eigen::VectorXd x_star;  // raw predictor scale
  Eigen::Vector2d s_star = Eigen::Vector2d::Zero();
  std::vector<double> tau_star;
};

struct PredictionResult {
  std::vector<QuantileSummary> summary;  // one per tau*
  Eigen::MatrixXd per_draw;              // draws x tau*
  bool clamped = false;                  // x* left the training range
};

struct WaicObservation {
  double lppd = 0.0;
  double p_waic = 0.0;
  double waic = 0.0;
};

struct WaicReport {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic2 = 0.0;
  std::vector<WaicObservation> per_observation;
};

/// WAIC from a draws x n matrix of pointwise log-likelihoods.
WaicReport waic_from_loglik(const Eigen::MatrixXd& loglik);

struct CurveSummary {
  std::vector<double> taus;
  std::vector<std::string> names;                    // intercept, then predictors
  std::vector<std::vector<QuantileSummary>> coef;    // [coefficient][tau]
};

/// Posterior draws rebuilt into curves and ready for prediction, scoring and
/// summaries. Holds references to the draws, training data and cache.
class FittedModel {
 public:
  FittedModel(const PosteriorDraws& draws, const Dataset& train, const CorrelationCache& cache,
              const CurveGrid& grid = CurveGrid::standard());

  std::size_t size() const { return states_.size(); }
  const DecodedParams& params(std::size_t d) const { return states_.at(d).params; }
  const CoefficientCurves& curves(std::size_t d) const { return states_.at(d).curves; }

  PredictionResult predict(const PredictionRequest& request) const;
  /// Same as predict but ignores the copula: Q(tau | x) per draw.
  PredictionResult predict_marginal(const Eigen::VectorXd& x_star, const std::vector<double>& taus) const;

  /// (p+1) x taus coefficients of one draw on the raw predictor scale.
  Eigen::MatrixXd raw_coefficients(std::size_t d, const std::vector<double>& taus) const;
  CurveSummary summarize_curves(const std::vector<double>& taus) const;
  /// beta(tau2) - beta(tau1) per coefficient, raw scale.
  std::vector<QuantileSummary> differential_effect(double tau1, double tau2) const;
  /// alpha rho(s_i, s_j) between training sites; alpha on the diagonal.
  QuantileSummary induced_correlation(Eigen::Index i, Eigen::Index j) const;
  std::vector<double> induced_correlation_draws(Eigen::Index i, Eigen::Index j) const;

  /// draws x n conditional log-likelihoods with one latent draw per parameter draw.
  Eigen::MatrixXd pointwise_loglik(std::mt19937_64& rng) const;
  WaicReport waic(std::mt19937_64& rng) const;

  /// Check loss per tau averaged over a dataset, scoring the posterior-mean
  /// quantile. With `conditional` the prediction conditions on the training
  /// levels at each site; otherwise the marginal curves are used.
  std::vector<double> average_check_loss(const Dataset& data, const std::vector<double>& taus,
                                         bool conditional) const;

 private:
  struct DrawState {
    DecodedParams params;
    CoefficientCurves curves;
    Eigen::VectorXd yz;  // V_g^T z for the draw's decay index
    bool spatial = false;
  };

  const PosteriorDraws& draws_;
  const Dataset& train_;
  const CorrelationCache& cache_;
  std::vector<DrawState> states_;
};

PredictionResult predict_conditional_quantile(const PredictionRequest& request, const PosteriorDraws& draws,
                                              const Dataset& train, const CorrelationCache& cache);
WaicReport compute_waic(const PosteriorDraws& draws, const Dataset& train, const CorrelationCache& cache,
                        std::mt19937_64& rng);
CurveSummary summarize_curves(const PosteriorDraws& draws, const Dataset& train, const CorrelationCache& cache,
                              const std::vector<double>& taus);

}  // namespace jsqr
