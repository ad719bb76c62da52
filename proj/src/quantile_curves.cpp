#include "jsqr/quantile_curves.hpp"

#include "jsqr/errors.hpp"
#include "jsqr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace jsqr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// expm1(x)/x, continuous at 0
double expm1_ratio(double x) {
  if (std::abs(x) < 1e-8) return 1.0 + 0.5 * x;
  return std::expm1(x) / x;
}

// log1p(x)/x, continuous at 0
double log1p_ratio(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - 0.5 * x;
  return std::log1p(x) / x;
}

void check_domain(const Eigen::VectorXd& x, int p) {
  if (x.size() != p) throw DomainError("predictor vector has wrong length");
  for (Eigen::Index j = 0; j < x.size(); ++j)
    if (!(std::abs(x(j)) <= 1.0 + 1e-9)) throw DomainError("predictor outside [-1,1]^p");
}

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("quantile level must lie in (0,1)");
}

}  // namespace

std::vector<double> default_tau_grid() {
  std::vector<double> g{0.001, 0.005};
  for (int i = 1; i <= 99; ++i) g.push_back(i / 100.0);
  g.push_back(0.995);
  g.push_back(0.999);
  return g;
}

std::vector<double> default_knots() {
  std::vector<double> k(11);
  for (int i = 0; i < 11; ++i) k[i] = 0.04 + 0.092 * i;
  return k;
}

CurveGrid CurveGrid::make(const std::vector<double>& interior, const std::vector<double>& knots) {
  if (interior.empty() || knots.empty()) throw DomainError("grid and knots must be nonempty");
  CurveGrid g;
  g.nodes.resize(static_cast<Eigen::Index>(interior.size()) + 2);
  g.nodes(0) = 0.0;
  for (std::size_t i = 0; i < interior.size(); ++i) g.nodes(static_cast<Eigen::Index>(i) + 1) = interior[i];
  g.nodes(g.nodes.size() - 1) = 1.0;
  for (Eigen::Index i = 1; i < g.nodes.size(); ++i)
    if (!(g.nodes(i) > g.nodes(i - 1))) throw DomainError("tau grid must be strictly increasing inside (0,1)");

  g.anchor = -1;
  for (Eigen::Index i = 1; i + 1 < g.nodes.size(); ++i)
    if (std::abs(g.nodes(i) - 0.5) < 1e-12) g.anchor = i;
  if (g.anchor < 0) throw DomainError("tau grid must contain 0.5");

  g.knots = Eigen::Map<const Eigen::VectorXd>(knots.data(), static_cast<Eigen::Index>(knots.size()));
  return g;
}

const CurveGrid& CurveGrid::standard() {
  static const CurveGrid grid = make(default_tau_grid(), default_knots());
  return grid;
}

std::vector<double> CurveGrid::interior() const {
  return std::vector<double>(nodes.data() + 1, nodes.data() + nodes.size() - 1);
}

Eigen::Index CurveGrid::cell_of(double tau) const {
  const double* begin = nodes.data();
  const double* end = begin + nodes.size();
  Eigen::Index k = std::upper_bound(begin, end, tau) - begin - 1;
  return std::clamp<Eigen::Index>(k, 0, nodes.size() - 2);
}

ZetaTable zeta_transform(const Eigen::VectorXd& nodes, const Eigen::VectorXd& omega0) {
  const Eigen::Index n = nodes.size();
  if (omega0.size() != n || n < 2) throw DomainError("zeta_transform: size mismatch");
  if (!omega0.allFinite()) throw DomainError("zeta_transform: omega0 must be finite");

  const double top = omega0.maxCoeff();
  Eigen::VectorXd e = (omega0.array() - top).exp();
  Eigen::VectorXd cell(n - 1);
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double h = nodes(k + 1) - nodes(k);
    // anchor at the larger endpoint so exp never over- or underflows against it
    const double d = omega0(k + 1) - omega0(k);
    cell(k) = h * (d > 0.0 ? e(k + 1) * expm1_ratio(-d) : e(k) * expm1_ratio(d));
  }
  // Sum from both ends: 1 - zeta taken by subtraction would lose the upper tail.
  Eigen::VectorXd cum(n), rcum(n);
  cum(0) = 0.0;
  for (Eigen::Index k = 0; k + 1 < n; ++k) cum(k + 1) = cum(k) + cell(k);
  rcum(n - 1) = 0.0;
  for (Eigen::Index k = n - 1; k > 0; --k) rcum(k - 1) = rcum(k) + cell(k - 1);
  const double total = cum(n - 1);

  ZetaTable out;
  out.zeta = cum / total;
  out.zeta(0) = 0.0;
  out.zeta(n - 1) = 1.0;
  out.upper = rcum / total;
  out.upper(0) = 1.0;
  out.upper(n - 1) = 0.0;
  out.dzeta = e / total;
  return out;
}

double projection_radius(const Eigen::VectorXd& b) {
  const double n2 = b.norm();
  if (n2 == 0.0) return 1.0;
  return b.lpNorm<1>() / n2;
}

Eigen::VectorXd scaled_direction(const Eigen::VectorXd& w) {
  const double n2 = w.norm();
  if (n2 == 0.0) return Eigen::VectorXd::Zero(w.size());
  return w * (n2 / (w.lpNorm<1>() * std::hypot(1.0, n2)));
}

Eigen::MatrixXd se_gram(const Eigen::VectorXd& knots, double lambda, double jitter) {
  const Eigen::Index m = knots.size();
  Eigen::MatrixXd c(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double d = knots(i) - knots(j);
      c(i, j) = se_correlation(d * d, lambda);
    }
  c.diagonal().array() += jitter;
  return c;
}

GpInterpolant::GpInterpolant(const Eigen::VectorXd& knots, double lambda,
                             const Eigen::VectorXd& values)
    : knots_(knots), lambda2_(lambda * lambda) {
  if (values.size() != knots.size()) throw DomainError("knot values have wrong length");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("lambda must be positive");
  const Eigen::MatrixXd c = se_gram(knots, lambda, kGpJitter);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) {
    weights_ = llt.solve(values);
  } else {
    weights_ = c.ldlt().solve(values);
  }
}

double GpInterpolant::operator()(double t) const {
  double v = 0.0;
  for (Eigen::Index i = 0; i < knots_.size(); ++i) {
    const double d = t - knots_(i);
    v += std::exp(-lambda2_ * d * d) * weights_(i);
  }
  return v;
}

QuantileCurveParams QuantileCurveParams::zeros(int p, int m) {
  QuantileCurveParams q;
  q.gamma = Eigen::VectorXd::Zero(p);
  q.omega0 = Eigen::VectorXd::Zero(m);
  q.omega = Eigen::MatrixXd::Zero(p, m);
  // lambda with exp(-0.01 lambda^2) = 0.6, the Be(6,4) prior mean
  q.lambda = Eigen::VectorXd::Constant(p + 1, std::sqrt(-std::log(0.6) / 0.01));
  return q;
}

double QuantileCurveParams::sigma() const { return std::sqrt(sigma2()); }

// ---------------------------------------------------------------------------

void CoefficientCurves::finalize() {
  const CurveGrid& g = *grid_;
  const Eigen::Index n = g.size();
  const int p = this->p();

  slope_.resize(n - 1);
  for (Eigen::Index k = 0; k + 1 < n; ++k)
    slope_(k) = (std::log(dzeta_(k + 1)) - std::log(dzeta_(k))) / (g.nodes(k + 1) - g.nodes(k));

  t_.resize(n);
  t_(0) = -kInf;
  t_(n - 1) = kInf;
  for (Eigen::Index k = 1; k + 1 < n; ++k) t_(k) = t_from(zeta_(k), upper_(k));
  for (Eigen::Index k = 2; k + 1 < n; ++k)
    if (!(t_(k) > t_(k - 1))) throw ResolutionError("zeta lost resolution between grid nodes");

  wt_.row(0) = wt_.row(1);
  wt_.row(n - 1) = wt_.row(n - 2);

  const Eigen::Index a = g.anchor;
  beta0_.resize(n);
  beta_.resize(n, p);
  beta_.row(a) = gamma_.transpose();
  for (Eigen::Index k = a; k + 2 < n; ++k)
    beta_.row(k + 1) = beta_.row(k) + 0.5 * sigma_ * (t_(k + 1) - t_(k)) * (wt_.row(k) + wt_.row(k + 1));
  for (Eigen::Index k = a; k > 1; --k)
    beta_.row(k - 1) = beta_.row(k) - 0.5 * sigma_ * (t_(k) - t_(k - 1)) * (wt_.row(k) + wt_.row(k - 1));
  for (Eigen::Index k = 1; k + 1 < n; ++k) beta0_(k) = gamma0_ + sigma_ * (t_(k) - t_(a));
  beta0_(0) = -kInf;
  beta0_(n - 1) = kInf;
  beta_.row(0).setZero();
  beta_.row(n - 1).setZero();

  dbeta0_ = Eigen::VectorXd::Zero(n);
  dbeta_ = Eigen::MatrixXd::Zero(n, p);
  for (Eigen::Index k = 1; k + 1 < n; ++k) {
    dbeta0_(k) = sigma_ * dzeta_(k) / base_.pdf(t_(k));
    dbeta_.row(k) = dbeta0_(k) * wt_.row(k);
  }
  if (!beta_.allFinite() || !dbeta0_.allFinite())
    throw NumericalError("coefficient curves are not finite");
}

void CoefficientCurves::check_resolution() const {
  const Eigen::Index n = grid_->size();
  // Every interior step must clear a few ulps of the largest |Q| over the
  // predictor cube, or some vertex would see two equal node values.
  for (Eigen::Index k = 1; k + 2 < n; ++k) {
    const double g_min = 2.0 - (wt_.row(k) + wt_.row(k + 1)).lpNorm<1>();
    const double step = 0.5 * sigma_ * (t_(k + 1) - t_(k)) * g_min;
    const double reach = std::max(std::abs(beta0_(k)) + beta_.row(k).lpNorm<1>(),
                                  std::abs(beta0_(k + 1)) + beta_.row(k + 1).lpNorm<1>());
    if (!(step > 4.0 * std::numeric_limits<double>::epsilon() * reach))
      throw ResolutionError("quantile curves are flat below double resolution");
  }
}

double CoefficientCurves::zeta_in_cell(Eigen::Index k, double tau) const {
  const double d = tau - grid_->nodes(k);
  return zeta_(k) + dzeta_(k) * d * expm1_ratio(slope_(k) * d);
}

// 1 - zeta, integrated back from the right end of the cell
double CoefficientCurves::upper_in_cell(Eigen::Index k, double tau) const {
  const double d = grid_->nodes(k + 1) - tau;
  return upper_(k + 1) + dzeta_(k + 1) * d * expm1_ratio(-slope_(k) * d);
}

// Symmetric base: F0^{-1}(z) = -F0^{-1}(1 - z), so the upper half works from
// the complement and keeps full relative precision near 1.
double CoefficientCurves::t_from(double z, double upper) const {
  if (z <= 0.5) return base_.quantile(std::max(z, 1e-300));
  return -base_.quantile(std::max(upper, 1e-300));
}

double CoefficientCurves::t_in_cell(Eigen::Index k, double tau) const {
  const double z = zeta_in_cell(k, tau);
  return t_from(z, z <= 0.5 ? 1.0 - z : upper_in_cell(k, tau));
}

double CoefficientCurves::tau_from_t(Eigen::Index k, double t) const {
  const Eigen::VectorXd& nodes = grid_->nodes;
  double tau;
  if (t <= 0.0) {
    const double r = (base_.cdf(t) - zeta_(k)) / dzeta_(k);
    const double x = std::max(slope_(k) * r, -1.0 + 1e-16);
    tau = nodes(k) + r * log1p_ratio(x);
  } else {
    const double r = (base_.cdf(-t) - upper_(k + 1)) / dzeta_(k + 1);
    const double x = std::max(-slope_(k) * r, -1.0 + 1e-16);
    tau = nodes(k + 1) - r * log1p_ratio(x);
  }
  return std::clamp(tau, nodes(k), nodes(k + 1));
}

double CoefficientCurves::log_dzeta_in_cell(Eigen::Index k, double tau) const {
  return std::log(dzeta_(k)) + slope_(k) * (tau - grid_->nodes(k));
}

double CoefficientCurves::slope_factor(Eigen::Index k, double t, const Eigen::VectorXd& x) const {
  const Eigen::Index n = grid_->size();
  if (k == 0) return 1.0 + wt_.row(1).dot(x);
  if (k == n - 2) return 1.0 + wt_.row(n - 2).dot(x);
  const double gk = 1.0 + wt_.row(k).dot(x);
  const double gk1 = 1.0 + wt_.row(k + 1).dot(x);
  return gk + (gk1 - gk) * (t - t_(k)) / (t_(k + 1) - t_(k));
}

double CoefficientCurves::q_in_cell(Eigen::Index k, double t, const Eigen::VectorXd& x,
                                    double qk) const {
  const Eigen::Index n = grid_->size();
  if (k == 0) return qk + sigma_ * (1.0 + wt_.row(1).dot(x)) * (t - t_(1));
  if (k == n - 2) return qk + sigma_ * (1.0 + wt_.row(n - 2).dot(x)) * (t - t_(n - 2));
  const double gk = 1.0 + wt_.row(k).dot(x);
  const double gk1 = 1.0 + wt_.row(k + 1).dot(x);
  const double d = t - t_(k);
  return qk + sigma_ * (gk * d + (gk1 - gk) * d * d / (2.0 * (t_(k + 1) - t_(k))));
}

double CoefficientCurves::beta0_at(double tau) const {
  check_tau(tau);
  const Eigen::Index k = grid_->cell_of(tau);
  return gamma0_ + sigma_ * (t_in_cell(k, tau) - t_(grid_->anchor));
}

Eigen::VectorXd CoefficientCurves::beta_at(double tau) const {
  check_tau(tau);
  const Eigen::Index n = grid_->size();
  const Eigen::Index k = grid_->cell_of(tau);
  const double t = t_in_cell(k, tau);
  if (k == 0) return beta_.row(1).transpose() + sigma_ * (t - t_(1)) * wt_.row(1).transpose();
  if (k == n - 2)
    return beta_.row(n - 2).transpose() + sigma_ * (t - t_(n - 2)) * wt_.row(n - 2).transpose();
  const double d = t - t_(k);
  const double dt = t_(k + 1) - t_(k);
  return (beta_.row(k) + sigma_ * (d * wt_.row(k) + d * d / (2.0 * dt) * (wt_.row(k + 1) - wt_.row(k))))
      .transpose();
}

double CoefficientCurves::value(double tau, const Eigen::VectorXd& x) const {
  check_tau(tau);
  check_domain(x, p());
  const Eigen::Index k = grid_->cell_of(tau);
  const Eigen::Index ref = k == 0 ? 1 : k;
  return q_in_cell(k, t_in_cell(k, tau), x, node_values(x)(ref));
}

double CoefficientCurves::density(double tau, const Eigen::VectorXd& x) const {
  check_tau(tau);
  check_domain(x, p());
  const Eigen::Index k = grid_->cell_of(tau);
  const double t = t_in_cell(k, tau);
  return sigma_ * slope_factor(k, t, x) * std::exp(log_dzeta_in_cell(k, tau) - base_.log_pdf(t));
}

Eigen::VectorXd CoefficientCurves::node_values(const Eigen::VectorXd& x) const {
  return node_values_rows(x.transpose()).col(0);
}

Eigen::MatrixXd CoefficientCurves::node_values_rows(const Eigen::MatrixXd& x) const {
  const Eigen::Index n = grid_->size();
  const Eigen::Index a = grid_->anchor;
  // Walk out from the median adding nonnegative cell increments. This equals
  // beta0 + beta x exactly but, unlike the dot product, cannot round into a
  // decrease when neighbouring quantiles agree to the last few bits.
  Eigen::MatrixXd g = wt_ * x.transpose();
  g.array() += 1.0;
  Eigen::MatrixXd q(n, x.rows());
  q.row(a) = (gamma0_ + (x * gamma_).array()).transpose();
  for (Eigen::Index k = a; k + 2 < n; ++k)
    q.row(k + 1) = q.row(k) + (0.5 * sigma_ * (t_(k + 1) - t_(k))) * (g.row(k) + g.row(k + 1));
  for (Eigen::Index k = a; k > 1; --k)
    q.row(k - 1) = q.row(k) - (0.5 * sigma_ * (t_(k) - t_(k - 1))) * (g.row(k) + g.row(k - 1));
  q.row(0).setConstant(-kInf);
  q.row(n - 1).setConstant(kInf);
  return q;
}

double CoefficientCurves::invert(double y, const Eigen::VectorXd& x, double* log_fy) const {
  check_domain(x, p());
  return invert(y, x, node_values(x), log_fy);
}

double CoefficientCurves::invert(double y, const Eigen::VectorXd& x, const Eigen::VectorXd& q,
                                 double* log_fy) const {
  if (!std::isfinite(y)) throw DomainError("response must be finite");
  const Eigen::Index n = grid_->size();

  Eigen::Index k;
  double t;
  if (y < q(1)) {
    k = 0;
    t = t_(1) + (y - q(1)) / (sigma_ * (1.0 + wt_.row(1).dot(x)));
  } else if (y >= q(n - 2)) {
    k = n - 2;
    t = t_(n - 2) + (y - q(n - 2)) / (sigma_ * (1.0 + wt_.row(n - 2).dot(x)));
  } else {
    // q(1) <= y < q(n-2): find k in [1, n-3] with q(k) <= y < q(k+1)
    const double* begin = q.data() + 1;
    const double* end = q.data() + (n - 1);
    k = std::upper_bound(begin, end, y) - q.data() - 1;
    const double gk = 1.0 + wt_.row(k).dot(x);
    const double gk1 = 1.0 + wt_.row(k + 1).dot(x);
    const double dt = t_(k + 1) - t_(k);
    const double r = y - q(k);
    const double a = sigma_ * (gk1 - gk) / (2.0 * dt);
    const double b = sigma_ * gk;
    const double disc = std::max(b * b + 4.0 * a * r, 0.0);
    t = std::clamp(t_(k) + 2.0 * r / (b + std::sqrt(disc)), t_(k), t_(k + 1));
  }

  const double tau_raw = tau_from_t(k, t);
  if (log_fy) {
    *log_fy = base_.log_pdf(t) - std::log(sigma_) - std::log(slope_factor(k, t, x)) -
              log_dzeta_in_cell(k, tau_raw);
  }
  return std::clamp(tau_raw, 1e-12, 1.0 - 1e-12);
}

double CoefficientCurves::min_vertex_slope_factor() const {
  double m = kInf;
  for (Eigen::Index k = 1; k + 1 < wt_.rows(); ++k) m = std::min(m, 1.0 - wt_.row(k).lpNorm<1>());
  return m;
}

CoefficientCurves build_coefficient_curves(const QuantileCurveParams& params,
                                           const BaseDistribution& base, const CurveGrid& grid) {
  const int p = params.p();
  const Eigen::Index m = grid.knot_count();
  if (params.omega0.size() != m || params.omega.rows() != p || params.omega.cols() != m)
    throw DomainError("omega knot arrays do not match the knot grid");
  if (params.lambda.size() != p + 1) throw DomainError("need one lambda per omega function");
  const double s2 = params.sigma2();
  if (!(params.sigma_s2 >= 0.0) || !(params.sigma_e2 >= 0.0) || !(s2 > 0.0) || !std::isfinite(s2))
    throw DomainError("variance shares must be nonnegative with a positive finite sum");
  if (!params.omega0.allFinite() || !params.omega.allFinite() || !params.gamma.allFinite() ||
      !std::isfinite(params.gamma0))
    throw DomainError("curve parameters must be finite");

  CoefficientCurves c;
  c.grid_ = &grid;
  c.base_ = base;
  c.sigma_ = std::sqrt(s2);
  c.gamma0_ = params.gamma0;
  c.gamma_ = params.gamma;

  const Eigen::Index n = grid.size();
  const GpInterpolant w0(grid.knots, params.lambda(0), params.omega0);
  Eigen::VectorXd omega0_nodes(n);
  for (Eigen::Index k = 0; k < n; ++k) omega0_nodes(k) = w0(grid.nodes(k));
  ZetaTable zt = zeta_transform(grid.nodes, omega0_nodes);
  c.zeta_ = std::move(zt.zeta);
  c.upper_ = std::move(zt.upper);
  c.dzeta_ = std::move(zt.dzeta);

  Eigen::MatrixXd w(n, p);
  for (int j = 0; j < p; ++j) {
    const GpInterpolant wj(grid.knots, params.lambda(j + 1), params.omega.row(j).transpose());
    for (Eigen::Index k = 1; k + 1 < n; ++k) w(k, j) = wj(c.zeta_(k));
  }
  c.wt_.resize(n, p);
  for (Eigen::Index k = 1; k + 1 < n; ++k) c.wt_.row(k) = scaled_direction(w.row(k).transpose()).transpose();

  c.finalize();
  if (!(c.min_vertex_slope_factor() > 0.0) || !(c.dbeta0_.segment(1, n - 2).minCoeff() > 0.0))
    throw NumericalError("non-crossing condition violated at a domain vertex");
  c.check_resolution();
  return c;
}

CoefficientCurves curves_from_directions(const BaseDistribution& base, double sigma, double gamma0,
                                         const Eigen::VectorXd& gamma,
                                         const Eigen::MatrixXd& directions, const CurveGrid& grid) {
  const Eigen::Index n = grid.size();
  if (directions.rows() != n || directions.cols() != gamma.size())
    throw DomainError("direction table has wrong shape");
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");

  CoefficientCurves c;
  c.grid_ = &grid;
  c.base_ = base;
  c.sigma_ = sigma;
  c.gamma0_ = gamma0;
  c.gamma_ = gamma;
  c.zeta_ = grid.nodes;
  c.upper_ = 1.0 - grid.nodes.array();
  c.dzeta_ = Eigen::VectorXd::Ones(n);
  c.wt_ = directions;
  c.finalize();
  return c;
}

double quantile_value(const CoefficientCurves& curves, double tau, const Eigen::VectorXd& x) {
  return curves.value(tau, x);
}

double quantile_density(const CoefficientCurves& curves, double tau, const Eigen::VectorXd& x) {
  return curves.density(tau, x);
}

double invert_quantile(const CoefficientCurves& curves, double y, const Eigen::VectorXd& x) {
  return curves.invert(y, x);
}

}  // namespace jsqr
