#pragma once

#include "jsqr/likelihood.hpp"
#include "jsqr/quantile_curves.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace jsqr {

enum class MarginalScenario { example1, example2, heavy_tail_t3 };
enum class CopulaScenario { independent, asymmetric_laplace, gaussian, student_t };

MarginalScenario parse_marginal_scenario(const std::string& name);
CopulaScenario parse_copula_scenario(const std::string& name);
std::string to_string(MarginalScenario m);
std::string to_string(CopulaScenario c);

struct ScenarioSpec {
  MarginalScenario marginal = MarginalScenario::example1;
  CopulaScenario copula = CopulaScenario::gaussian;
  int n = 200;
  int n_test = 50;
  double alpha = 0.7;
  double nu = 2.0;
  double phi = 0.3;
  double psi = 3.0;
  double al_tau = 0.4;
  // Draw alpha ~ Un(0,1) and phi uniformly over the effective-range prior
  // interval of the training locations instead of using the fields above.
  bool random_dependence = false;
  int phi_grid_size = 10;
  std::uint64_t seed = 1;

  void validate() const;
  int p() const;
};

/// Ground-truth conditional quantile function of a scenario, on the raw
/// predictor scale.
class TruthModel {
 public:
  explicit TruthModel(MarginalScenario marginal);
  int p() const { return p_; }
  double quantile(double tau, const Eigen::VectorXd& x) const;
  /// (beta0(tau), beta(tau)) stacked into a (p+1)-vector.
  Eigen::VectorXd coefficients(double tau) const;
  /// Tabulated curves (example2, heavy_tail_t3); null for the closed form.
  const CoefficientCurves* curves() const { return curves_.get(); }

 private:
  MarginalScenario marginal_;
  int p_ = 1;
  std::shared_ptr<const CoefficientCurves> curves_;
};

double true_quantile(const ScenarioSpec& scenario, double tau, const Eigen::VectorXd& x);

/// Example 2 slope bumps nu_j(tau) = sum_l a_lj N(tau; (l-1)/2, 1/9).
Eigen::VectorXd example2_nu(double tau);

/// Uniform draw from the unit ball in R^d.
Eigen::VectorXd sample_unit_ball(int d, std::mt19937_64& rng);

struct SimulatedData {
  ScenarioSpec scenario;  // with the realized alpha and phi
  Dataset train;
  Dataset test;
  Eigen::VectorXd u_train;
  Eigen::VectorXd u_test;
};

/// Draws training and test sets from one joint latent field over all sites.
SimulatedData generate(const ScenarioSpec& scenario);

/// Latent quantile levels at the given sites under a copula scenario.
Eigen::VectorXd sample_latent_levels(const Locations& s, const ScenarioSpec& scenario,
                                     std::mt19937_64& rng);

/// True Q(tau | x, s*, U_1..U_n) given the training levels, for the Gaussian,
/// t and independent scenarios. Factorizes the latent correlation once.
class TrueConditionalQuantile {
 public:
  TrueConditionalQuantile(const ScenarioSpec& scenario, const Locations& s_train, const Eigen::VectorXd& u_train);
  double level(double tau, const Eigen::Vector2d& s_star) const;
  double operator()(double tau, const Eigen::Vector2d& s_star, const Eigen::VectorXd& x_raw) const;

 private:
  ScenarioSpec scenario_;
  TruthModel truth_;
  Locations s_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd rz_;  // R^{-1} z
  double quad_ = 0.0;
};

/// CDF of the asymmetric Laplace law with density tau(1-tau) exp(-rho_tau(x)).
double asymmetric_laplace_cdf(double x, double tau);

}  // namespace jsqr
