#include "jsqr/simgen.hpp"

#include "jsqr/copulas.hpp"
#include "jsqr/errors.hpp"
#include "jsqr/kernels.hpp"
#include "jsqr/stats.hpp"

#include <cmath>
#include <mutex>

namespace jsqr {

namespace {

// Rows l = 1..3 of the Example 2 bump weights, columns j = 1..7.
const double kExample2A[3][7] = {
    {0, 0, -3, -2, 0, 5, -1},
    {-3, 0, 0, 2, 4, 1, 0},
    {0, -2, 2, 2, -4, 0, 0},
};
const double kExample2Anchor[7] = {0.96, -0.38, 0.05, -0.22, -0.80, -0.80, -5.97};

constexpr double kLevelClamp = 1e-12;

double clamp_level(double u) { return std::clamp(u, kLevelClamp, 1.0 - kLevelClamp); }

std::shared_ptr<const CoefficientCurves> build_truth_curves(MarginalScenario m) {
  const CurveGrid& grid = CurveGrid::standard();
  const Eigen::Index N = grid.size();
  if (m == MarginalScenario::example2) {
    Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(N, 7);
    for (Eigen::Index k = 1; k + 1 < N; ++k) {
      const Eigen::VectorXd nu = example2_nu(grid.nodes(k));
      dir.row(k) = (nu / std::sqrt(1.0 + nu.squaredNorm())).transpose();
    }
    BaseDistribution base;
    base.family = BaseFamily::normal;
    const Eigen::VectorXd anchor = Eigen::Map<const Eigen::VectorXd>(kExample2Anchor, 7);
    return std::make_shared<const CoefficientCurves>(curves_from_directions(base, 1.0, 0.0, anchor, dir, grid));
  }
  Eigen::MatrixXd dir = Eigen::MatrixXd::Zero(N, 1);
  for (Eigen::Index k = 1; k + 1 < N; ++k) {
    const double nu = 3.0 * (grid.nodes(k) - 0.5);
    dir(k, 0) = nu / std::sqrt(1.0 + nu * nu);
  }
  BaseDistribution base;
  base.family = BaseFamily::student_t;
  base.dof = 3.0;
  return std::make_shared<const CoefficientCurves>(
      curves_from_directions(base, 3.0, 0.0, Eigen::VectorXd::Zero(1), dir, grid));
}

std::shared_ptr<const CoefficientCurves> cached_truth_curves(MarginalScenario m) {
  static std::mutex mu;
  static std::shared_ptr<const CoefficientCurves> ex2, t3;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = m == MarginalScenario::example2 ? ex2 : t3;
  if (!slot) slot = build_truth_curves(m);
  return slot;
}

}  // namespace

MarginalScenario parse_marginal_scenario(const std::string& name) {
  if (name == "example1") return MarginalScenario::example1;
  if (name == "example2") return MarginalScenario::example2;
  if (name == "heavy_tail_t3" || name == "heavy_tail") return MarginalScenario::heavy_tail_t3;
  throw DomainError("unknown marginal scenario '" + name + "'");
}

CopulaScenario parse_copula_scenario(const std::string& name) {
  if (name == "independent") return CopulaScenario::independent;
  if (name == "asymmetric_laplace") return CopulaScenario::asymmetric_laplace;
  if (name == "gaussian") return CopulaScenario::gaussian;
  if (name == "student_t" || name == "t") return CopulaScenario::student_t;
  throw DomainError("unknown copula scenario '" + name + "'");
}

std::string to_string(MarginalScenario m) {
  switch (m) {
    case MarginalScenario::example1: return "example1";
    case MarginalScenario::example2: return "example2";
    case MarginalScenario::heavy_tail_t3: return "heavy_tail_t3";
  }
  return "?";
}

std::string to_string(CopulaScenario c) {
  switch (c) {
    case CopulaScenario::independent: return "independent";
    case CopulaScenario::asymmetric_laplace: return "asymmetric_laplace";
    case CopulaScenario::gaussian: return "gaussian";
    case CopulaScenario::student_t: return "student_t";
  }
  return "?";
}

void ScenarioSpec::validate() const {
  if (n < 0 || n_test < 0 || n + n_test < 1) throw DomainError("scenario needs at least one site");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0,1]");
  if (!(nu > 0.0) || !(phi > 0.0)) throw DomainError("nu and phi must be positive");
  if (copula == CopulaScenario::student_t && !(psi > 0.0)) throw DomainError("psi must be positive");
  if (!(al_tau > 0.0 && al_tau < 1.0)) throw DomainError("asymmetric Laplace tau must lie in (0,1)");
  if (random_dependence && phi_grid_size < 1) throw DomainError("phi grid size must be positive");
}

int ScenarioSpec::p() const { return marginal == MarginalScenario::example2 ? 7 : 1; }

TruthModel::TruthModel(MarginalScenario marginal) : marginal_(marginal) {
  p_ = marginal == MarginalScenario::example2 ? 7 : 1;
  if (marginal != MarginalScenario::example1) curves_ = cached_truth_curves(marginal);
}

Eigen::VectorXd TruthModel::coefficients(double tau) const {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  Eigen::VectorXd c(p_ + 1);
  if (marginal_ == MarginalScenario::example1) {
    const double l = -std::log(tau * (1.0 - tau));
    const double d = tau - 0.5;
    c << 3.0 * d * l, 4.0 * d * d * l;
    return c;
  }
  c(0) = curves_->beta0_at(tau);
  c.tail(p_) = curves_->beta_at(tau);
  return c;
}

double TruthModel::quantile(double tau, const Eigen::VectorXd& x) const {
  if (x.size() != p_) throw DomainError("predictor length does not match the scenario");
  if (marginal_ == MarginalScenario::example1) {
    const Eigen::VectorXd c = coefficients(tau);
    return c(0) + c(1) * x(0);
  }
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  return curves_->value(tau, x);
}

double true_quantile(const ScenarioSpec& scenario, double tau, const Eigen::VectorXd& x) {
  return TruthModel(scenario.marginal).quantile(tau, x);
}

Eigen::VectorXd example2_nu(double tau) {
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(7);
  const double sd = 1.0 / 3.0;
  for (int l = 0; l < 3; ++l) {
    const double bump = stats::norm_pdf((tau - 0.5 * l) / sd) / sd;
    for (int j = 0; j < 7; ++j) nu(j) += kExample2A[l][j] * bump;
  }
  return nu;
}

Eigen::VectorXd sample_unit_ball(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd v(d);
  double norm = 0.0;
  do {
    for (int i = 0; i < d; ++i) v(i) = normal(rng);
    norm = v.norm();
  } while (norm == 0.0);
  const double r = std::pow(unif(rng), 1.0 / d);
  return v * (r / norm);
}

TrueConditionalQuantile::TrueConditionalQuantile(const ScenarioSpec& scenario, const Locations& s_train,
                                                 const Eigen::VectorXd& u_train)
    : scenario_(scenario), truth_(scenario.marginal), s_(s_train) {
  if (scenario.copula == CopulaScenario::asymmetric_laplace)
    throw DomainError("the conditional quantile is not available for the asymmetric Laplace process");
  if (s_train.rows() != u_train.size()) throw DomainError("locations and levels differ in length");
  if (scenario.copula == CopulaScenario::independent || s_train.rows() == 0) return;
  Eigen::MatrixXd r = scenario.alpha * matern_matrix(s_train, scenario.nu, scenario.phi);
  r.diagonal().array() += 1.0 - scenario.alpha;
  llt_.compute(r);
  if (llt_.info() != Eigen::Success) throw NumericalError("latent correlation is not positive definite");
  const CopulaFamily fam = scenario.copula == CopulaScenario::student_t ? CopulaFamily::student_t : CopulaFamily::gaussian;
  const Eigen::VectorXd z = latent_scores(u_train, fam, scenario.psi);
  rz_ = llt_.solve(z);
  quad_ = z.dot(rz_);
}

double TrueConditionalQuantile::level(double tau, const Eigen::Vector2d& s_star) const {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
  if (scenario_.copula == CopulaScenario::independent || s_.rows() == 0) return tau;
  const Eigen::VectorXd k = matern_cross(s_, s_star, scenario_.nu, scenario_.phi);
  ConditionalMoments m;
  m.n = static_cast<std::size_t>(s_.rows());
  m.quad = quad_;
  m.mean = scenario_.alpha * k.dot(rz_);
  m.variance = std::max(0.0, 1.0 - scenario_.alpha * scenario_.alpha * k.dot(llt_.solve(k)));
  const CopulaFamily fam = scenario_.copula == CopulaScenario::student_t ? CopulaFamily::student_t : CopulaFamily::gaussian;
  return clamp_level(conditional_level(tau, m, fam, scenario_.psi));
}

double TrueConditionalQuantile::operator()(double tau, const Eigen::Vector2d& s_star, const Eigen::VectorXd& x_raw) const {
  return truth_.quantile(level(tau, s_star), x_raw);
}

double asymmetric_laplace_cdf(double x, double tau) {
  if (x < 0.0) return tau * std::exp((1.0 - tau) * x);
  return 1.0 - (1.0 - tau) * std::exp(-tau * x);
}

Eigen::VectorXd sample_latent_levels(const Locations& s, const ScenarioSpec& sc, std::mt19937_64& rng) {
  const Eigen::Index n = s.rows();
  Eigen::VectorXd u(n);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (sc.copula == CopulaScenario::independent) {
    for (Eigen::Index i = 0; i < n; ++i) u(i) = clamp_level(unif(rng));
    return u;
  }

  // Z ~ GP(0, alpha K + (1 - alpha) I)
  Eigen::MatrixXd cov = sc.alpha * matern_matrix(s, sc.nu, sc.phi);
  cov.diagonal().array() += 1.0 - sc.alpha;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10;
    llt.compute(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("latent covariance is not positive definite");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd xi(n);
  for (Eigen::Index i = 0; i < n; ++i) xi(i) = normal(rng);
  const Eigen::VectorXd z = llt.matrixL() * xi;

  switch (sc.copula) {
    case CopulaScenario::gaussian:
      for (Eigen::Index i = 0; i < n; ++i) u(i) = stats::norm_cdf(z(i));
      break;
    case CopulaScenario::student_t: {
      std::gamma_distribution<double> gam(0.5 * sc.psi, 2.0 / sc.psi);
      const double scale = 1.0 / std::sqrt(gam(rng));
      for (Eigen::Index i = 0; i < n; ++i) u(i) = stats::t_cdf(scale * z(i), sc.psi);
      break;
    }
    case CopulaScenario::asymmetric_laplace: {
      const double t = sc.al_tau;
      std::exponential_distribution<double> expo(1.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double e = expo(rng);
        const double w = std::sqrt(2.0 * e / (t * (1.0 - t))) * z(i) + (1.0 - 2.0 * t) / (t * (1.0 - t)) * e;
        u(i) = asymmetric_laplace_cdf(w, t);
      }
      break;
    }
    case CopulaScenario::independent:
      break;
  }
  for (Eigen::Index i = 0; i < n; ++i) u(i) = clamp_level(u(i));
  return u;
}

SimulatedData generate(const ScenarioSpec& scenario) {
  scenario.validate();
  SimulatedData out;
  out.scenario = scenario;
  ScenarioSpec& sc = out.scenario;
  std::mt19937_64 rng(scenario.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int total = sc.n + sc.n_test;
  const int p = sc.p();
  Locations s(total, 2);
  for (int i = 0; i < total; ++i) {
    s(i, 0) = unif(rng);
    s(i, 1) = unif(rng);
  }
  Eigen::MatrixXd x(total, p);
  for (int i = 0; i < total; ++i) {
    if (sc.marginal == MarginalScenario::example2)
      x.row(i) = sample_unit_ball(p, rng).transpose();
    else
      x(i, 0) = 2.0 * unif(rng) - 1.0;
  }

  if (sc.random_dependence) {
    sc.alpha = unif(rng);
    const Locations train_s = s.topRows(std::max(sc.n, 2));
    const std::vector<double> grid = phi_grid_from_effective_range(train_s, sc.nu, std::max(sc.phi_grid_size, 2));
    sc.phi = grid.front() + (grid.back() - grid.front()) * unif(rng);
  }

  const Eigen::VectorXd u = sample_latent_levels(s, sc, rng);
  const TruthModel truth(sc.marginal);
  Eigen::VectorXd y(total);
  for (int i = 0; i < total; ++i) y(i) = truth.quantile(u(i), x.row(i).transpose());

  out.u_train = u.head(sc.n);
  out.u_test = u.tail(sc.n_test);
  out.train = make_dataset(y.head(sc.n), x.topRows(sc.n), s.topRows(sc.n));
  if (sc.n_test > 0) {
    const RescaleRecord rec = sc.n > 1 ? out.train.rescale : RescaleRecord::from(x);
    out.test = make_dataset(y.tail(sc.n_test), x.bottomRows(sc.n_test), s.bottomRows(sc.n_test), rec);
  }
  return out;
}

}  // namespace jsqr
