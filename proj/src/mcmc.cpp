#include "jsqr/mcmc.hpp"

#include "jsqr/errors.hpp"
#include "jsqr/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

namespace jsqr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogSigmaBound = 100.0;
constexpr double kLogitAlphaBound = 30.0;

double logistic(double x) { return stats::logistic_cdf(x); }
double logit(double p) { return std::log(p) - std::log1p(-p); }

// log(s(x)) + log(1 - s(x)) for the logistic function s, stable for large |x|
double log_logistic_jacobian(double x) {
  const double a = std::abs(x);
  return -a - 2.0 * std::log1p(std::exp(-a));
}

struct Variances {
  double sigma_s2 = 0.0;
  double sigma_e2 = 0.0;
  double alpha = 0.0;
  bool in_support = true;
};

Variances decode_variances(const Eigen::VectorXd& theta, const ParameterLayout& l, const ModelSpec& spec) {
  Variances v;
  const double s1 = theta(l.s1), s2 = theta(l.s2);
  if (!spec.scale_proportion) {
    if (std::abs(s2) > kLogSigmaBound || (!spec.alpha_fixed_zero && std::abs(s1) > kLogSigmaBound))
      v.in_support = false;
    v.sigma_e2 = std::exp(2.0 * s2);
    v.sigma_s2 = spec.alpha_fixed_zero ? 0.0 : std::exp(2.0 * s1);
    v.alpha = v.sigma_s2 / (v.sigma_s2 + v.sigma_e2);
  } else {
    if (std::abs(s2) > 2.0 * kLogSigmaBound || (!spec.alpha_fixed_zero && std::abs(s1) > kLogitAlphaBound))
      v.in_support = false;
    const double s2tot = std::exp(s2);
    v.alpha = spec.alpha_fixed_zero ? 0.0 : logistic(s1);
    v.sigma_s2 = v.alpha * s2tot;
    v.sigma_e2 = (1.0 - v.alpha) * s2tot;
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

ParameterLayout ParameterLayout::make(int p, int m, const ModelSpec& spec) {
  ParameterLayout l;
  l.p = p;
  l.m = m;
  l.gamma0 = 0;
  l.gamma = 1;
  l.s1 = 1 + p;
  l.s2 = 2 + p;
  l.omega0 = 3 + p;
  l.omega = l.omega0 + m;
  l.log_kappa2 = l.omega + p * m;
  l.logit_rho = l.log_kappa2 + p + 1;
  int next = l.logit_rho + p + 1;
  if (spec.base == BaseFamily::student_t) l.eta = next++;
  if (spec.copula == CopulaFamily::student_t && !spec.alpha_fixed_zero) l.psi = next++;
  l.size = next;
  return l;
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> n(static_cast<std::size_t>(size));
  n[gamma0] = "gamma0";
  for (int j = 0; j < p; ++j) n[gamma + j] = "gamma" + std::to_string(j + 1);
  n[s1] = "s1";
  n[s2] = "s2";
  for (int k = 0; k < m; ++k) n[omega0 + k] = "omega0_" + std::to_string(k + 1);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < m; ++k) n[omega_at(j, k)] = "omega" + std::to_string(j + 1) + "_" + std::to_string(k + 1);
  for (int j = 0; j <= p; ++j) {
    n[log_kappa2 + j] = "log_kappa2_" + std::to_string(j);
    n[logit_rho + j] = "logit_rho_" + std::to_string(j);
  }
  if (eta >= 0) n[eta] = "eta";
  if (psi >= 0) n[psi] = "logit_psi";
  return n;
}

double base_dof_from_eta(double eta) { return 0.5 + 5.5 * std::exp(0.5 * eta); }

double eta_from_base_dof(double dof) {
  if (!(dof > 0.5)) throw DomainError("base dof must exceed 0.5");
  return 2.0 * std::log((dof - 0.5) / 5.5);
}

double psi_from_unconstrained(double q) { return kPsiMin + (kPsiMax - kPsiMin) * logistic(q); }

double unconstrained_from_psi(double psi) {
  if (!(psi > kPsiMin && psi < kPsiMax)) throw DomainError("psi must lie in (2,20)");
  return logit((psi - kPsiMin) / (kPsiMax - kPsiMin));
}

DecodedParams decode(const Eigen::VectorXd& theta, std::size_t phi_index, const ParameterLayout& l,
                     const ModelSpec& spec, const CorrelationCache& cache) {
  if (theta.size() != l.size) throw DomainError("parameter vector has wrong length");
  DecodedParams d;
  const int p = l.p, m = l.m;
  d.curve.gamma0 = theta(l.gamma0);
  d.curve.gamma = theta.segment(l.gamma, p);
  const Variances v = decode_variances(theta, l, spec);
  d.curve.sigma_s2 = v.sigma_s2;
  d.curve.sigma_e2 = v.sigma_e2;
  d.curve.omega0 = theta.segment(l.omega0, m);
  d.curve.omega.resize(p, m);
  for (int j = 0; j < p; ++j) d.curve.omega.row(j) = theta.segment(l.omega_at(j, 0), m).transpose();
  d.hyper.kappa2 = theta.segment(l.log_kappa2, p + 1).array().exp();
  d.hyper.rho = theta.segment(l.logit_rho, p + 1).unaryExpr([](double r) { return logistic(r); });
  d.curve.lambda.resize(p + 1);
  for (int j = 0; j <= p; ++j) {
    const double rho = std::clamp(d.hyper.rho(j), 1e-300, 1.0 - 1e-16);
    d.curve.lambda(j) = lambda_from_rho(rho);
  }

  d.copula.family = spec.alpha_fixed_zero ? CopulaFamily::gaussian : spec.copula;
  d.copula.alpha = v.alpha;
  d.copula.phi_index = phi_index;
  d.copula.nu = spec.nu;
  d.copula.psi = l.psi >= 0 ? psi_from_unconstrained(theta(l.psi)) : 10.0;
  (void)cache;

  d.base.family = spec.base;
  d.base.dof = l.eta >= 0 ? base_dof_from_eta(theta(l.eta)) : 5.0;
  return d;
}

void McmcConfig::validate() const {
  if (n_iter < 1 || burn_in < 0 || !(burn_in < n_iter)) throw DomainError("need 0 <= burn_in < n_iter");
  if (retained < 2) throw DomainError("need at least two retained draws");
  if (retained > n_iter - burn_in) throw DomainError("more retained draws than post-burn-in iterations");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw DomainError("target acceptance must lie in (0,1)");
  if (!(adapt_decay > 0.5 && adapt_decay <= 1.0)) throw DomainError("adaptation decay must lie in (0.5,1]");
  if (chains < 1) throw DomainError("need at least one chain");
  if (abort_window < 1) throw DomainError("abort window must be positive");
}

// ---------------------------------------------------------------------------

PosteriorTarget::PosteriorTarget(const Dataset& data, const CorrelationCache& cache, const ModelSpec& spec,
                                 const PriorSpec& prior, const CurveGrid& grid)
    : data_(data), cache_(cache), spec_(spec), prior_(prior), grid_(grid) {
  prior_.validate();
  if (spec_.alpha_fixed_zero) spec_.copula = CopulaFamily::gaussian;
  if (spec_.G != static_cast<int>(cache.grid_size())) spec_.G = static_cast<int>(cache.grid_size());
  if (spec_.G < 1) throw DomainError("decay grid is empty");
  if (data.n() > 0 && cache.n() != static_cast<std::size_t>(data.n()))
    throw DomainError("correlation cache does not match the dataset");
  layout_ = ParameterLayout::make(data.p(), static_cast<int>(grid.knot_count()), spec_);
}

double PosteriorTarget::alpha_of(const Eigen::VectorXd& theta) const {
  return decode_variances(theta, layout_, spec_).alpha;
}

double PosteriorTarget::log_prior_unconstrained(const Eigen::VectorXd& theta) const {
  const ParameterLayout& l = layout_;
  const Variances v = decode_variances(theta, l, spec_);
  if (!v.in_support) return kNegInf;
  if (!theta.allFinite()) return kNegInf;

  const DecodedParams d = decode(theta, 0, l, spec_, cache_);
  PriorSpec ps = prior_;
  if (spec_.alpha_fixed_zero) ps.alpha_prior = AlphaPrior::uniform;
  double lp = log_prior(d.curve, d.copula, d.hyper, ps, spec_.G, grid_);
  if (!std::isfinite(lp)) return kNegInf;

  // Jacobians from the natural parametrization to the unconstrained one
  const double s1 = theta(l.s1), s2 = theta(l.s2);
  const double s2tot = v.sigma_s2 + v.sigma_e2;
  if (!spec_.scale_proportion) {
    if (spec_.alpha_fixed_zero)
      lp += std::log(2.0) + 2.0 * s2;
    else
      lp += -std::log(s2tot) + std::log(4.0) + 2.0 * s1 + 2.0 * s2;
  } else {
    lp += s2;
    if (!spec_.alpha_fixed_zero) lp += log_logistic_jacobian(s1);
  }
  for (int j = 0; j <= l.p; ++j) {
    lp += theta(l.log_kappa2 + j);
    lp += log_logistic_jacobian(theta(l.logit_rho + j));
  }
  if (l.eta >= 0) lp += log_logistic_jacobian(theta(l.eta));  // standard logistic prior on eta
  if (l.psi >= 0) lp += log_logistic_jacobian(theta(l.psi)) + std::log(kPsiMax - kPsiMin);
  return lp;
}

double PosteriorTarget::copula_term(const Eigen::VectorXd& y, double z_marginal, double alpha, double psi,
                                    std::size_t phi_index) const {
  return copula_logdensity_projected(spec_.copula, y, z_marginal, alpha, psi,
                                     cache_.entry(phi_index).eigenvalues);
}

TargetEval PosteriorTarget::evaluate(const Eigen::VectorXd& theta, std::size_t phi_index) const {
  TargetEval e;
  e.prior = log_prior_unconstrained(theta);
  if (!std::isfinite(e.prior)) return e;
  if (data_.n() == 0) {
    e.log_post = e.prior;
    return e;
  }
  const DecodedParams d = decode(theta, phi_index, layout_, spec_, cache_);
  try {
    const CoefficientCurves curves = build_coefficient_curves(d.curve, d.base, grid_);
    MarginalEval m = evaluate_marginal(curves, data_);
    if (!m.valid) return e;
    e.marginal = m.sum;
    e.u = std::move(m.u);
  } catch (const NumericalError&) {
    return e;
  } catch (const DomainError&) {
    return e;
  }
  const bool spatial = !(spec_.alpha_fixed_zero || (d.copula.alpha == 0.0 && spec_.copula == CopulaFamily::gaussian));
  if (spatial && data_.n() > 1) {
    try {
      e.z = latent_scores(e.u, spec_.copula, d.copula.psi);
      e.z_marginal = marginal_log_sum(e.z, spec_.copula, d.copula.psi);
      e.copula = copula_term(cache_.entry(phi_index).project(e.z), e.z_marginal, d.copula.alpha, d.copula.psi,
                             phi_index);
    } catch (const NumericalError&) {
      return e;
    }
  }
  e.loglik = e.marginal + e.copula;
  e.log_post = e.prior + e.loglik;
  if (std::isnan(e.log_post)) e.log_post = kNegInf;
  return e;
}

TargetEval PosteriorTarget::evaluate_copula_only(const Eigen::VectorXd& theta, std::size_t phi_index,
                                                 const TargetEval& previous) const {
  TargetEval e;
  e.prior = log_prior_unconstrained(theta);
  if (!std::isfinite(e.prior)) return e;
  e.marginal = previous.marginal;
  e.u = previous.u;
  if (data_.n() > 1 && !spec_.alpha_fixed_zero) {
    const double alpha = alpha_of(theta);
    const double psi = layout_.psi >= 0 ? psi_from_unconstrained(theta(layout_.psi)) : 10.0;
    try {
      if (spec_.copula == CopulaFamily::student_t || previous.z.size() != e.u.size()) {
        e.z = latent_scores(e.u, spec_.copula, psi);
        e.z_marginal = marginal_log_sum(e.z, spec_.copula, psi);
      } else {
        e.z = previous.z;
        e.z_marginal = previous.z_marginal;
      }
      e.copula = copula_term(cache_.entry(phi_index).project(e.z), e.z_marginal, alpha, psi, phi_index);
    } catch (const NumericalError&) {
      return e;
    }
  }
  e.loglik = e.marginal + e.copula;
  e.log_post = e.prior + e.loglik;
  if (std::isnan(e.log_post)) e.log_post = kNegInf;
  return e;
}

Eigen::VectorXd PosteriorTarget::phi_log_weights(const TargetEval& state, const Eigen::VectorXd& theta) const {
  const Eigen::Index G = static_cast<Eigen::Index>(cache_.grid_size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(G);
  const double alpha = alpha_of(theta);
  if (data_.n() <= 1 || spec_.alpha_fixed_zero || state.z.size() != data_.n()) return w;
  const double psi = layout_.psi >= 0 ? psi_from_unconstrained(theta(layout_.psi)) : 10.0;
  const Eigen::Index n = data_.n();
  const Eigen::VectorXd y = cache_.project_all(state.z);
  for (Eigen::Index g = 0; g < G; ++g) {
    try {
      w(g) = copula_term(y.segment(g * n, n), state.z_marginal, alpha, psi, static_cast<std::size_t>(g));
    } catch (const NumericalError&) {
      w(g) = kNegInf;
    }
  }
  return w;
}

Eigen::VectorXd PosteriorTarget::initial_theta() const {
  const ParameterLayout& l = layout_;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(l.size);
  const Eigen::Index n = data_.n();
  const int p = l.p;
  double resid_var = 1.0;
  if (n > p + 1) {
    Eigen::MatrixXd a(n, p + 1);
    a.col(0).setOnes();
    a.rightCols(p) = data_.x;
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(data_.y);
    theta(l.gamma0) = coef(0);
    theta.segment(l.gamma, p) = coef.tail(p);
    resid_var = (data_.y - a * coef).squaredNorm() / static_cast<double>(n - p - 1);
    if (!(resid_var > 0.0)) resid_var = 1.0;
  }
  double s2 = resid_var;
  if (spec_.base == BaseFamily::logistic) s2 *= 3.0 / (M_PI * M_PI);
  if (spec_.base == BaseFamily::student_t) s2 *= (6.0 - 2.0) / 6.0;  // dof 6 at eta = 0

  if (!spec_.scale_proportion) {
    if (spec_.alpha_fixed_zero) {
      theta(l.s2) = 0.5 * std::log(s2);
      theta(l.s1) = theta(l.s2);
    } else {
      theta(l.s1) = theta(l.s2) = 0.5 * std::log(0.5 * s2);
    }
  } else {
    theta(l.s1) = 0.0;
    theta(l.s2) = std::log(s2);
  }
  theta.segment(l.logit_rho, p + 1).setConstant(logit(0.6));
  if (l.eta >= 0) theta(l.eta) = 0.0;
  if (l.psi >= 0) theta(l.psi) = unconstrained_from_psi(10.0);
  return theta;
}

// ---------------------------------------------------------------------------

namespace {

struct AdaptiveBlock {
  std::string name;
  std::vector<int> idx;
  Eigen::VectorXd init_sd;
  double log_scale = 0.0;
  Eigen::MatrixXd chol;
  bool cov_mode = false;
  long updates = 0;
  long n_obs = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;
  long proposals = 0, accepts = 0;  // retained phase
  long window_count = 0, window_neginf = 0;

  void init() {
    const Eigen::Index d = static_cast<Eigen::Index>(idx.size());
    chol = init_sd.asDiagonal();
    mean = Eigen::VectorXd::Zero(d);
    m2 = Eigen::MatrixXd::Zero(d, d);
  }

  bool empty() const { return idx.empty(); }

  Eigen::VectorXd propose(const Eigen::VectorXd& theta, std::mt19937_64& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index d = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd xi(d);
    for (Eigen::Index i = 0; i < d; ++i) xi(i) = normal(rng);
    const Eigen::VectorXd step = std::exp(log_scale) * (chol * xi);
    Eigen::VectorXd out = theta;
    for (Eigen::Index i = 0; i < d; ++i) out(idx[i]) += step(i);
    return out;
  }

  void record_window(bool neginf, const McmcConfig& cfg) {
    ++window_count;
    if (neginf) ++window_neginf;
    if (window_count == cfg.abort_window) {
      if (window_neginf >= cfg.abort_share * cfg.abort_window)
        throw McmcAbort("block '" + name + "': " + std::to_string(window_neginf) + " of " +
                        std::to_string(window_count) + " proposals had zero posterior density");
      window_count = window_neginf = 0;
    }
  }

  void adapt(double acc_prob, const Eigen::VectorXd& theta, const McmcConfig& cfg) {
    ++updates;
    log_scale += std::pow(static_cast<double>(updates), -cfg.adapt_decay) * (acc_prob - cfg.target_accept);
    log_scale = std::clamp(log_scale, -30.0, 10.0);

    // Running covariance, skipping the first half of the warm-up transient.
    if (updates <= cfg.cov_warmup / 2) return;
    const Eigen::Index d = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < d; ++i) x(i) = theta(idx[i]);
    ++n_obs;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(n_obs);
    m2 += delta * (x - mean).transpose();

    if (updates < cfg.cov_warmup) return;
    if (cov_mode && (updates - cfg.cov_warmup) % cfg.cov_refresh != 0) return;
    Eigen::MatrixXd cov = m2 / static_cast<double>(std::max<long>(n_obs - 1, 1));
    cov = 0.5 * (cov + cov.transpose());
    const double ridge = 1e-8 * std::max(cov.trace() / static_cast<double>(d), 1e-12) + 1e-14;
    cov.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return;
    chol = llt.matrixL();
    if (!cov_mode) {
      cov_mode = true;
      log_scale = std::log(2.38 / std::sqrt(static_cast<double>(d)));
    }
  }
};

class Chain {
 public:
  Chain(const PosteriorTarget& target, const McmcConfig& cfg, int chain_id)
      : target_(target), cfg_(cfg), chain_id_(chain_id), rng_(cfg.seed + static_cast<std::uint64_t>(chain_id)) {
    setup_blocks();
  }

  std::vector<Draw> run(long& phi_rejections) {
    const ParameterLayout& l = target_.layout();
    const std::size_t G = target_.cache().grid_size();
    theta_ = cfg_.init_theta.size() == l.size ? cfg_.init_theta : target_.initial_theta();
    phi_ = cfg_.init_phi_index >= 0 ? static_cast<std::size_t>(cfg_.init_phi_index) : G / 2;
    if (phi_ >= G) throw DomainError("initial decay index outside the grid");
    cur_ = target_.evaluate(theta_, phi_);
    if (!std::isfinite(cur_.log_post)) throw McmcAbort("initial parameter values have zero posterior density");

    const bool spatial = !target_.spec().alpha_fixed_zero;
    const int post = cfg_.n_iter - cfg_.burn_in;
    const int thin = std::max(1, post / cfg_.retained);
    std::vector<Draw> draws;
    draws.reserve(static_cast<std::size_t>(cfg_.retained));

    for (int it = 0; it < cfg_.n_iter; ++it) {
      const bool adapting = it < cfg_.burn_in;
      for (AdaptiveBlock& b : step1_) metropolis(b, adapting, false);
      if (spatial) {
        metropolis(step2_, adapting, false);
        if (!cfg_.freeze_phi && G > 1) {
          const Eigen::VectorXd w = target_.phi_log_weights(cur_, theta_);
          const std::size_t g = sample_log_weights(w, rng_);
          if (!std::isfinite(w(static_cast<Eigen::Index>(g)))) ++phi_rejections;
          phi_ = g;
          if (data_n() > 1) {
            cur_.copula = w(static_cast<Eigen::Index>(g));
            cur_.loglik = cur_.marginal + cur_.copula;
            cur_.log_post = cur_.prior + cur_.loglik;
          }
        }
        metropolis(psi_, adapting, true);
      }
      metropolis(step4_, adapting, false);

      if (!adapting) {
        const int j = it - cfg_.burn_in;
        if ((j + 1) % thin == 0 && static_cast<int>(draws.size()) < cfg_.retained) {
          Draw d;
          d.theta = theta_;
          d.phi_index = phi_;
          d.u = cur_.u;
          d.loglik = cur_.loglik;
          d.log_post = cur_.log_post;
          d.chain = chain_id_;
          draws.push_back(std::move(d));
        }
      }
    }
    return draws;
  }

  std::vector<BlockDiagnostics> diagnostics() const {
    std::vector<BlockDiagnostics> out;
    auto add = [&](const AdaptiveBlock& b) {
      if (b.empty()) return;
      out.push_back({b.name, b.proposals, b.accepts, b.log_scale});
    };
    for (const AdaptiveBlock& b : step1_) add(b);
    add(step2_);
    add(psi_);
    add(step4_);
    return out;
  }

 private:
  Eigen::Index data_n() const { return target_.data().n(); }

  AdaptiveBlock make_block(const std::string& name, std::vector<int> idx, const std::vector<double>& sd) {
    AdaptiveBlock b;
    b.name = name;
    std::vector<double> kept_sd;
    std::vector<int> kept;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (std::find(cfg_.frozen.begin(), cfg_.frozen.end(), idx[i]) != cfg_.frozen.end()) continue;
      kept.push_back(idx[i]);
      kept_sd.push_back(sd[i]);
    }
    b.idx = kept;
    b.init_sd = Eigen::Map<const Eigen::VectorXd>(kept_sd.data(), static_cast<Eigen::Index>(kept_sd.size()));
    b.init();
    return b;
  }

  void setup_blocks() {
    const ParameterLayout& l = target_.layout();
    const ModelSpec& spec = target_.spec();
    const Eigen::VectorXd init = target_.initial_theta();
    double sigma = 1.0;
    {
      const Variances v = decode_variances(init, l, spec);
      sigma = std::sqrt(v.sigma_s2 + v.sigma_e2);
    }

    std::vector<int> idx;
    std::vector<double> sd;
    for (int i = 0; i <= l.p; ++i) {
      idx.push_back(i);
      sd.push_back(0.1 * sigma);
    }
    step1_.push_back(make_block("gamma", idx, sd));

    idx.assign({l.s2});
    sd.assign({0.1});
    for (int j = 0; j <= l.p; ++j) {
      idx.push_back(l.log_kappa2 + j);
      sd.push_back(0.5);
      idx.push_back(l.logit_rho + j);
      sd.push_back(0.5);
    }
    if (l.eta >= 0) {
      idx.push_back(l.eta);
      sd.push_back(0.5);
    }
    step1_.push_back(make_block("scale_hyper", idx, sd));

    idx.clear();
    for (int k = 0; k < l.m; ++k) idx.push_back(l.omega0 + k);
    step1_.push_back(make_block("omega0", idx, std::vector<double>(idx.size(), 0.3)));
    for (int j = 0; j < l.p; ++j) {
      idx.clear();
      for (int k = 0; k < l.m; ++k) idx.push_back(l.omega_at(j, k));
      step1_.push_back(make_block("omega" + std::to_string(j + 1), idx, std::vector<double>(idx.size(), 0.3)));
    }

    if (!spec.alpha_fixed_zero) {
      step2_ = make_block("spatial_scale", {l.s1}, {0.1});
      if (l.psi >= 0) psi_ = make_block("psi", {l.psi}, {0.5});
      step4_ = make_block("joint_scale", {l.s1, l.s2}, {0.1, 0.1});
    } else {
      step4_ = make_block("error_scale", {l.s2}, {0.1});
    }
  }

  void metropolis(AdaptiveBlock& b, bool adapting, bool copula_only) {
    if (b.empty()) return;
    const Eigen::VectorXd prop = b.propose(theta_, rng_);
    TargetEval e = copula_only ? target_.evaluate_copula_only(prop, phi_, cur_) : target_.evaluate(prop, phi_);
    const double logr = e.log_post - cur_.log_post;
    b.record_window(!std::isfinite(e.log_post), cfg_);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const bool accept = std::isfinite(e.log_post) && std::log(unif(rng_)) < logr;
    const double acc_prob = std::isfinite(logr) ? std::min(1.0, std::exp(logr)) : 0.0;
    if (accept) {
      theta_ = prop;
      cur_ = std::move(e);
    }
    if (adapting) {
      b.adapt(acc_prob, theta_, cfg_);
    } else {
      ++b.proposals;
      if (accept) ++b.accepts;
    }
  }

  const PosteriorTarget& target_;
  const McmcConfig& cfg_;
  int chain_id_;
  std::mt19937_64 rng_;
  std::vector<AdaptiveBlock> step1_;
  AdaptiveBlock step2_, psi_, step4_;
  Eigen::VectorXd theta_;
  std::size_t phi_ = 0;
  TargetEval cur_;
};

}  // namespace

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("JSQR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

PosteriorDraws run_mcmc(const Dataset& data, const McmcConfig& config, const PriorSpec& prior,
                        const CorrelationCache& cache, const ModelSpec& spec) {
  config.validate();
  const PosteriorTarget target(data, cache, spec, prior);

  const int chains = config.chains;
  std::vector<std::vector<Draw>> per_chain(static_cast<std::size_t>(chains));
  std::vector<std::vector<BlockDiagnostics>> diag(static_cast<std::size_t>(chains));
  std::vector<long> phi_rej(static_cast<std::size_t>(chains), 0);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));

  auto work = [&](int c) {
    try {
      Chain chain(target, config, c);
      per_chain[c] = chain.run(phi_rej[c]);
      diag[c] = chain.diagnostics();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };

  const int workers = std::min(chains, resolve_thread_count(config.threads));
  if (workers <= 1) {
    for (int c = 0; c < chains; ++c) work(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int c = next++; c < chains; c = next++) work(c);
      });
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  PosteriorDraws out;
  out.spec = target.spec();
  out.layout = target.layout();
  out.phi_grid = cache.phi_grid();
  for (int c = 0; c < chains; ++c) {
    for (Draw& d : per_chain[c]) out.draws.push_back(std::move(d));
    out.phi_rejections += phi_rej[c];
    for (std::size_t b = 0; b < diag[c].size(); ++b) {
      if (c == 0) {
        out.diagnostics.push_back(diag[c][b]);
      } else {
        out.diagnostics[b].proposals += diag[c][b].proposals;
        out.diagnostics[b].accepts += diag[c][b].accepts;
      }
    }
  }
  return out;
}

std::vector<std::string> PosteriorDraws::scalar_names() const {
  std::vector<std::string> n{"alpha", "sigma2", "phi", "gamma0"};
  for (int j = 0; j < layout.p; ++j) n.push_back("gamma" + std::to_string(j + 1));
  if (layout.psi >= 0) n.push_back("psi");
  if (layout.eta >= 0) n.push_back("dof");
  return n;
}

std::vector<double> PosteriorDraws::scalar_chain(const std::string& name) const {
  std::vector<double> out;
  out.reserve(draws.size());
  for (const Draw& d : draws) {
    const Variances v = decode_variances(d.theta, layout, spec);
    double x;
    if (name == "alpha") {
      x = v.alpha;
    } else if (name == "sigma2") {
      x = v.sigma_s2 + v.sigma_e2;
    } else if (name == "phi") {
      x = phi_grid.at(d.phi_index);
    } else if (name == "psi" && layout.psi >= 0) {
      x = psi_from_unconstrained(d.theta(layout.psi));
    } else if (name == "dof" && layout.eta >= 0) {
      x = base_dof_from_eta(d.theta(layout.eta));
    } else if (name == "gamma0") {
      x = d.theta(layout.gamma0);
    } else if (name.rfind("gamma", 0) == 0) {
      const int j = std::stoi(name.substr(5));
      if (j < 1 || j > layout.p) throw DomainError("unknown scalar '" + name + "'");
      x = d.theta(layout.gamma + j - 1);
    } else {
      throw DomainError("unknown scalar '" + name + "'");
    }
    out.push_back(x);
  }
  return out;
}

std::size_t sample_log_weights(const Eigen::VectorXd& logw, std::mt19937_64& rng) {
  const Eigen::Index G = logw.size();
  if (G == 0) throw DomainError("no weights to sample from");
  if (G == 1) return 0;
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw NumericalError("all full-conditional weights vanish");
  Eigen::VectorXd w = (logw.array() - top).exp();
  std::uniform_real_distribution<double> unif(0.0, w.sum());
  double r = unif(rng);
  for (Eigen::Index g = 0; g < G; ++g) {
    r -= w(g);
    if (r < 0.0) return static_cast<std::size_t>(g);
  }
  for (Eigen::Index g = G - 1; g >= 0; --g)
    if (w(g) > 0.0) return static_cast<std::size_t>(g);
  return 0;
}

std::size_t sample_phi_full_conditional(const Eigen::VectorXd& u, const CopulaParams& copula,
                                        const CorrelationCache& cache, std::mt19937_64& rng) {
  copula.validate();
  const Eigen::Index G = static_cast<Eigen::Index>(cache.grid_size());
  Eigen::VectorXd logw = Eigen::VectorXd::Zero(G);
  if (u.size() > 1 && !(copula.alpha == 0.0 && copula.family == CopulaFamily::gaussian)) {
    const Eigen::VectorXd z = latent_scores(u, copula.family, copula.psi);
    const double zm = marginal_log_sum(z, copula.family, copula.psi);
    for (Eigen::Index g = 0; g < G; ++g) {
      const SpectralEntry& e = cache.entry(static_cast<std::size_t>(g));
      logw(g) = copula_logdensity_projected(copula.family, e.project(z), zm, copula.alpha, copula.psi,
                                            e.eigenvalues);
    }
  }
  // the uniform prior over the grid adds the same constant to every weight
  return sample_log_weights(logw, rng);
}

double effective_sample_size(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  double mean = 0.0;
  for (double v : chain) mean += v;
  mean /= static_cast<double>(n);
  auto acov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += (chain[i] - mean) * (chain[i + k] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = acov(0);
  if (!(c0 > 0.0)) return static_cast<double>(n);

  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < n; k += 2) {
    double pair = (acov(k) + acov(k + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // initial monotone sequence
    sum += pair;
    prev_pair = pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

}  // namespace jsqr
