#include "jsqr/inference.hpp"

#include "jsqr/errors.hpp"
#include "jsqr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace jsqr {

namespace {

constexpr double kLevelClamp = 1e-12;

// Linear-interpolation sample quantile of sorted values.
double sorted_quantile(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void require_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("quantile level must lie in (0,1)");
}

}  // namespace

QuantileSummary summarize(std::vector<double> values) {
  if (values.empty()) throw DomainError("cannot summarize an empty sample");
  std::sort(values.begin(), values.end());
  QuantileSummary s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  s.median = sorted_quantile(values, 0.5);
  s.lower = sorted_quantile(values, 0.025);
  s.upper = sorted_quantile(values, 0.975);
  return s;
}

std::vector<double> summary_taus() {
  std::vector<double> t{0.01, 0.05};
  for (int k = 1; k <= 9; ++k) t.push_back(0.1 * k);
  t.push_back(0.95);
  t.push_back(0.99);
  return t;
}

double check_loss(double tau, double residual) {
  require_tau(tau);
  return stats::check_loss(tau, residual);
}

WaicReport waic_from_loglik(const Eigen::MatrixXd& ll) {
  const Eigen::Index S = ll.rows(), n = ll.cols();
  if (S < 2) throw DomainError("WAIC needs at least two draws");
  WaicReport r;
  r.per_observation.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd col = ll.col(i);
    const double top = col.maxCoeff();
    WaicObservation& o = r.per_observation[static_cast<std::size_t>(i)];
    o.lppd = top + std::log((col.array() - top).exp().sum()) - std::log(static_cast<double>(S));
    const double mean = col.mean();
    o.p_waic = (col.array() - mean).square().sum() / static_cast<double>(S - 1);
    o.waic = -2.0 * (o.lppd - o.p_waic);
    r.lppd += o.lppd;
    r.p_waic2 += o.p_waic;
  }
  r.waic = -2.0 * (r.lppd - r.p_waic2);
  return r;
}

// ---------------------------------------------------------------------------

FittedModel::FittedModel(const PosteriorDraws& draws, const Dataset& train, const CorrelationCache& cache,
                         const CurveGrid& grid)
    : draws_(draws), train_(train), cache_(cache) {
  if (draws.draws.empty()) throw DomainError("no posterior draws");
  if (draws.layout.p != train.p()) throw DomainError("draws and data disagree on the predictor count");
  const Eigen::Index n = train.n();
  states_.reserve(draws.draws.size());
  for (const Draw& d : draws.draws) {
    DecodedParams params = decode(d.theta, d.phi_index, draws.layout, draws.spec, cache);
    CoefficientCurves curves = build_coefficient_curves(params.curve, params.base, grid);
    DrawState st{std::move(params), std::move(curves), Eigen::VectorXd(), false};
    st.spatial = !draws.spec.alpha_fixed_zero && st.params.copula.alpha > 0.0 && n > 0 && d.u.size() == n;
    if (st.spatial) {
      const Eigen::VectorXd z = latent_scores(d.u, st.params.copula.family, st.params.copula.psi);
      st.yz = cache.entry(d.phi_index).project(z);
    }
    states_.push_back(std::move(st));
  }
}

PredictionResult FittedModel::predict(const PredictionRequest& req) const {
  if (req.x_star.size() != train_.p()) throw DomainError("x* has the wrong length");
  for (std::size_t k = 0; k < req.tau_star.size(); ++k) {
    require_tau(req.tau_star[k]);
    if (k > 0 && !(req.tau_star[k] > req.tau_star[k - 1])) throw DomainError("tau* must be strictly increasing");
  }
  PredictionResult out;
  Eigen::VectorXd x = train_.rescale.apply(req.x_star);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (std::abs(x(j)) > 1.0 + 1e-12) out.clamped = true;
    x(j) = std::clamp(x(j), -1.0, 1.0);
  }

  const std::size_t T = req.tau_star.size();
  out.per_draw.resize(static_cast<Eigen::Index>(states_.size()), static_cast<Eigen::Index>(T));
  std::map<std::size_t, Eigen::VectorXd> yk;  // V_g^T k* per decay index
  for (std::size_t d = 0; d < states_.size(); ++d) {
    const DrawState& st = states_[d];
    ConditionalMoments m;
    if (st.spatial) {
      const std::size_t g = draws_.draws[d].phi_index;
      auto it = yk.find(g);
      if (it == yk.end()) {
        const Eigen::VectorXd kstar = matern_cross(cache_.locations(), req.s_star, cache_.nu(), cache_.phi_grid()[g]);
        it = yk.emplace(g, cache_.entry(g).project(kstar)).first;
      }
      m = conditional_moments_projected(st.yz, it->second, st.params.copula.alpha, cache_.entry(g).eigenvalues);
    }
    for (std::size_t k = 0; k < T; ++k) {
      double level = req.tau_star[k];
      if (st.spatial) level = conditional_level(level, m, st.params.copula.family, st.params.copula.psi);
      level = std::clamp(level, kLevelClamp, 1.0 - kLevelClamp);
      out.per_draw(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = st.curves.value(level, x);
    }
  }
  for (std::size_t k = 0; k < T; ++k) {
    const Eigen::VectorXd col = out.per_draw.col(static_cast<Eigen::Index>(k));
    out.summary.push_back(summarize(std::vector<double>(col.data(), col.data() + col.size())));
  }
  return out;
}

PredictionResult FittedModel::predict_marginal(const Eigen::VectorXd& x_star, const std::vector<double>& taus) const {
  if (x_star.size() != train_.p()) throw DomainError("x* has the wrong length");
  PredictionResult out;
  Eigen::VectorXd x = train_.rescale.apply(x_star);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (std::abs(x(j)) > 1.0 + 1e-12) out.clamped = true;
    x(j) = std::clamp(x(j), -1.0, 1.0);
  }
  out.per_draw.resize(static_cast<Eigen::Index>(states_.size()), static_cast<Eigen::Index>(taus.size()));
  for (std::size_t k = 0; k < taus.size(); ++k) require_tau(taus[k]);
  for (std::size_t d = 0; d < states_.size(); ++d)
    for (std::size_t k = 0; k < taus.size(); ++k)
      out.per_draw(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = states_[d].curves.value(taus[k], x);
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const Eigen::VectorXd col = out.per_draw.col(static_cast<Eigen::Index>(k));
    out.summary.push_back(summarize(std::vector<double>(col.data(), col.data() + col.size())));
  }
  return out;
}

Eigen::MatrixXd FittedModel::raw_coefficients(std::size_t d, const std::vector<double>& taus) const {
  const CoefficientCurves& c = curves(d);
  const Eigen::VectorXd a = train_.rescale.scale();
  const Eigen::VectorXd b = train_.rescale.shift();
  const int p = train_.p();
  Eigen::MatrixXd out(p + 1, static_cast<Eigen::Index>(taus.size()));
  for (std::size_t k = 0; k < taus.size(); ++k) {
    require_tau(taus[k]);
    const Eigen::VectorXd beta = c.beta_at(taus[k]);
    const Eigen::Index col = static_cast<Eigen::Index>(k);
    out(0, col) = c.beta0_at(taus[k]) + b.dot(beta);
    out.col(col).tail(p) = a.cwiseProduct(beta);
  }
  return out;
}

CurveSummary FittedModel::summarize_curves(const std::vector<double>& taus) const {
  const int p = train_.p();
  CurveSummary s;
  s.taus = taus;
  s.names.push_back("intercept");
  for (int j = 0; j < p; ++j)
    s.names.push_back(j < static_cast<int>(train_.predictor_names.size()) ? train_.predictor_names[j]
                                                                           : "x" + std::to_string(j + 1));
  std::vector<Eigen::MatrixXd> coef;
  coef.reserve(size());
  for (std::size_t d = 0; d < size(); ++d) coef.push_back(raw_coefficients(d, taus));
  s.coef.assign(static_cast<std::size_t>(p + 1), {});
  std::vector<double> v(size());
  for (int j = 0; j <= p; ++j) {
    for (std::size_t k = 0; k < taus.size(); ++k) {
      for (std::size_t d = 0; d < size(); ++d) v[d] = coef[d](j, static_cast<Eigen::Index>(k));
      s.coef[static_cast<std::size_t>(j)].push_back(summarize(v));
    }
  }
  return s;
}

std::vector<QuantileSummary> FittedModel::differential_effect(double tau1, double tau2) const {
  const int p = train_.p();
  std::vector<std::vector<double>> diff(static_cast<std::size_t>(p + 1), std::vector<double>(size()));
  for (std::size_t d = 0; d < size(); ++d) {
    const Eigen::MatrixXd c = raw_coefficients(d, {tau1, tau2});
    for (int j = 0; j <= p; ++j) diff[static_cast<std::size_t>(j)][d] = c(j, 1) - c(j, 0);
  }
  std::vector<QuantileSummary> out;
  for (auto& v : diff) out.push_back(summarize(std::move(v)));
  return out;
}

std::vector<double> FittedModel::induced_correlation_draws(Eigen::Index i, Eigen::Index j) const {
  const Locations& s = cache_.locations();
  if (i < 0 || j < 0 || i >= s.rows() || j >= s.rows()) throw DomainError("site index out of range");
  const double dist = (s.row(i) - s.row(j)).norm();
  std::vector<double> r(size());
  for (std::size_t d = 0; d < size(); ++d) {
    const double alpha = states_[d].params.copula.alpha;
    r[d] = i == j ? alpha : alpha * matern_correlation(dist, cache_.nu(), cache_.phi_grid()[draws_.draws[d].phi_index]);
  }
  return r;
}

QuantileSummary FittedModel::induced_correlation(Eigen::Index i, Eigen::Index j) const {
  return summarize(induced_correlation_draws(i, j));
}

Eigen::MatrixXd FittedModel::pointwise_loglik(std::mt19937_64& rng) const {
  const Eigen::Index n = train_.n();
  Eigen::MatrixXd ll(static_cast<Eigen::Index>(size()), n);
  for (std::size_t d = 0; d < size(); ++d) {
    const DrawState& st = states_[d];
    const MarginalEval m = evaluate_marginal(st.curves, train_);
    if (!m.valid) throw NumericalError("posterior draw has an invalid marginal likelihood");
    if (!st.spatial || n < 2) {
      ll.row(static_cast<Eigen::Index>(d)) = m.log_fy.transpose();
      continue;
    }
    const CopulaParams& cp = st.params.copula;
    const Eigen::VectorXd z = latent_scores(m.u, cp.family, cp.psi);
    const LatentField lat = recover_latents(z, cp.family, cp.alpha, cp.psi, cache_.entry(cp.phi_index), rng);
    ll.row(static_cast<Eigen::Index>(d)) = per_observation_loglik(m, cp, lat).transpose();
  }
  return ll;
}

WaicReport FittedModel::waic(std::mt19937_64& rng) const { return waic_from_loglik(pointwise_loglik(rng)); }

std::vector<double> FittedModel::average_check_loss(const Dataset& data, const std::vector<double>& taus,
                                                    bool conditional) const {
  std::vector<double> loss(taus.size(), 0.0);
  const Eigen::Index n = data.n();
  if (n == 0) return loss;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = data.x_raw.row(i).transpose();
    PredictionResult r;
    if (conditional) {
      PredictionRequest req;
      req.x_star = x;
      req.s_star = data.s.row(i).transpose();
      req.tau_star = taus;
      r = predict(req);
    } else {
      r = predict_marginal(x, taus);
    }
    for (std::size_t k = 0; k < taus.size(); ++k) loss[k] += check_loss(taus[k], data.y(i) - r.summary[k].mean);
  }
  for (double& l : loss) l /= static_cast<double>(n);
  return loss;
}

PredictionResult predict_conditional_quantile(const PredictionRequest& request, const PosteriorDraws& draws,
                                              const Dataset& train, const CorrelationCache& cache) {
  return FittedModel(draws, train, cache).predict(request);
}

WaicReport compute_waic(const PosteriorDraws& draws, const Dataset& train, const CorrelationCache& cache,
                        std::mt19937_64& rng) {
  return FittedModel(draws, train, cache).waic(rng);
}

CurveSummary summarize_curves(const PosteriorDraws& draws, const Dataset& train, const CorrelationCache& cache,
                              const std::vector<double>& taus) {
  return FittedModel(draws, train, cache).summarize_curves(taus);
}

}  // namespace jsqr
