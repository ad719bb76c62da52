#pragma once

#include "jsqr/copulas.hpp"
#include "jsqr/kernels.hpp"
#include "jsqr/likelihood.hpp"
#include "jsqr/priors.hpp"
#include "jsqr/quantile_curves.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace jsqr {

/// Raised when a block keeps proposing into a region of zero posterior mass.
class McmcAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelSpec {
  CopulaFamily copula = CopulaFamily::gaussian;
  BaseFamily base = BaseFamily::logistic;
  double nu = 2.0;
  int G = 10;
  /// Independence model: alpha fixed at 0, no spatial steps.
  bool alpha_fixed_zero = false;
  /// Sample (log sigma^2, logit alpha) instead of (log sigma_s, log sigma_e).
  bool scale_proportion = false;
};

/// Positions of every scalar inside the unconstrained parameter vector.
///
///   [gamma0, gamma(p), s1, s2, omega0 knots(m), omega knots(p*m, row-major by
///    predictor), log kappa2(p+1), logit rho(p+1), eta (t base), logit psi (t copula)]
///
/// (s1, s2) = (log sigma_s, log sigma_e) by default, (logit alpha, log sigma^2)
/// under ModelSpec::scale_proportion.
struct ParameterLayout {
  int p = 0, m = 0;
  int gamma0 = 0, gamma = 1, s1 = 0, s2 = 0, omega0 = 0, omega = 0, log_kappa2 = 0, logit_rho = 0;
  int eta = -1, psi = -1;
  int size = 0;

  static ParameterLayout make(int p, int m, const ModelSpec& spec);
  int omega_at(int j, int k) const { return omega + j * m + k; }
  std::vector<std::string> names() const;
};

/// Degrees of freedom of the t base from its unconstrained coordinate.
double base_dof_from_eta(double eta);
double eta_from_base_dof(double dof);
double psi_from_unconstrained(double q);
double unconstrained_from_psi(double psi);

struct DecodedParams {
  QuantileCurveParams curve;
  CopulaParams copula;
  BaseDistribution base;
  GpHyper hyper;
};

DecodedParams decode(const Eigen::VectorXd& theta, std::size_t phi_index, const ParameterLayout& layout,
                     const ModelSpec& spec, const CorrelationCache& cache);

struct McmcConfig {
  int n_iter = 20000;
  int burn_in = 10000;
  int retained = 500;
  double target_accept = 0.234;
  double adapt_decay = 0.7;
  int cov_warmup = 200;
  int cov_refresh = 100;
  std::uint64_t seed = 1;
  int chains = 1;
  int threads = 0;  // 0: use JSQR_THREADS or hardware concurrency
  /// Abort when this share of a block's proposals in one window is -inf.
  double abort_share = 0.99;
  int abort_window = 500;
  /// Parameter indices held at their initial values (testing aid).
  std::vector<int> frozen;
  bool freeze_phi = false;
  /// Optional starting point; empty means the default initialization.
  Eigen::VectorXd init_theta;
  int init_phi_index = -1;

  void validate() const;
};

struct Draw {
  Eigen::VectorXd theta;
  std::size_t phi_index = 0;
  Eigen::VectorXd u;
  double loglik = 0.0;
  double log_post = 0.0;
  int chain = 0;
};

struct BlockDiagnostics {
  std::string name;
  long proposals = 0;
  long accepts = 0;
  double final_log_scale = 0.0;
  double acceptance() const { return proposals ? static_cast<double>(accepts) / proposals : 0.0; }
};

struct PosteriorDraws {
  ModelSpec spec;
  ParameterLayout layout;
  std::vector<double> phi_grid;
  std::vector<Draw> draws;
  std::vector<BlockDiagnostics> diagnostics;  // retained phase, summed over chains
  long phi_rejections = 0;                    // always 0: the phi step is a Gibbs draw

  std::size_t size() const { return draws.size(); }
  /// Derived scalar chains by name: alpha, sigma2, phi, psi, dof, gamma0, gamma<j>.
  std::vector<double> scalar_chain(const std::string& name) const;
  std::vector<std::string> scalar_names() const;
};

/// Log posterior (up to a constant) on the unconstrained scale, including all
/// Jacobian terms. -inf outside the support.
struct TargetEval {
  double log_post = -std::numeric_limits<double>::infinity();
  double loglik = 0.0;
  double marginal = 0.0;
  double copula = 0.0;
  double prior = 0.0;
  Eigen::VectorXd u;
  Eigen::VectorXd z;
  double z_marginal = 0.0;  // marginal_log_sum(z)
};

class PosteriorTarget {
 public:
  PosteriorTarget(const Dataset& data, const CorrelationCache& cache, const ModelSpec& spec,
                  const PriorSpec& prior, const CurveGrid& grid = CurveGrid::standard());

  const ParameterLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return spec_; }
  const Dataset& data() const { return data_; }
  const CorrelationCache& cache() const { return cache_; }

  /// Full evaluation (marginal and copula).
  TargetEval evaluate(const Eigen::VectorXd& theta, std::size_t phi_index) const;
  /// Re-evaluates only copula and prior terms, reusing u from `previous`.
  TargetEval evaluate_copula_only(const Eigen::VectorXd& theta, std::size_t phi_index,
                                  const TargetEval& previous) const;
  double log_prior_unconstrained(const Eigen::VectorXd& theta) const;

  /// Default starting point: least squares for gamma, residual scale split
  /// evenly between sigma_s and sigma_e, omega = 0, kappa2 = 1, rho = 0.6,
  /// psi = 10.
  Eigen::VectorXd initial_theta() const;

  /// log c_g(u) for every grid value g (unnormalized phi full conditional).
  Eigen::VectorXd phi_log_weights(const TargetEval& state, const Eigen::VectorXd& theta) const;

 private:
  double copula_term(const Eigen::VectorXd& y, double z_marginal, double alpha, double psi,
                     std::size_t phi_index) const;
  double alpha_of(const Eigen::VectorXd& theta) const;

  const Dataset& data_;
  const CorrelationCache& cache_;
  ModelSpec spec_;
  PriorSpec prior_;
  const CurveGrid& grid_;
  ParameterLayout layout_;
};

PosteriorDraws run_mcmc(const Dataset& data, const McmcConfig& config, const PriorSpec& prior,
                        const CorrelationCache& cache, const ModelSpec& spec = ModelSpec{});

/// Exact draw from the discrete full conditional of the decay index.
std::size_t sample_phi_full_conditional(const Eigen::VectorXd& u, const CopulaParams& copula,
                                        const CorrelationCache& cache, std::mt19937_64& rng);

/// Draws an index from unnormalized log weights (log-sum-exp stabilized).
std::size_t sample_log_weights(const Eigen::VectorXd& logw, std::mt19937_64& rng);

/// Effective sample size by Geyer's initial positive sequence estimator.
double effective_sample_size(const std::vector<double>& chain);

/// Worker count: explicit request, else JSQR_THREADS, else hardware concurrency.
int resolve_thread_count(int requested);

}  // namespace jsqr
