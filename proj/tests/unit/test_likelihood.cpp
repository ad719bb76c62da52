#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "jsqr/likelihood.hpp"
#include "jsqr/stats.hpp"

#include <cmath>
#include <random>

using namespace jsqr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const int kM = static_cast<int>(CurveGrid::standard().knot_count());

struct Problem {
  Dataset data;
  QuantileCurveParams curve;
};

// Identity rescaling, for datasets too small to have a predictor range.
RescaleRecord unit_record(int p) {
  RescaleRecord r;
  r.lo = -VectorXd::Ones(p);
  r.hi = VectorXd::Ones(p);
  return r;
}

Problem random_problem(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  Locations s(n, 2);
  MatrixXd x(n, p);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    s.row(i) << u(rng), u(rng);
    for (int j = 0; j < p; ++j) x(i, j) = 2 * u(rng) - 1;
    y(i) = z(rng);
  }
  Problem pr{n > 1 ? make_dataset(y, x, s) : make_dataset(y, x, s, unit_record(p)), QuantileCurveParams::zeros(p, kM)};
  pr.curve.gamma0 = 0.1;
  for (int j = 0; j < p; ++j) pr.curve.gamma(j) = 0.3 * (j + 1);
  for (int k = 0; k < kM; ++k) {
    pr.curve.omega0(k) = 0.4 * std::sin(k);
    for (int j = 0; j < p; ++j) pr.curve.omega(j, k) = 0.5 * std::cos(k + j);
  }
  pr.curve.lambda = VectorXd::Constant(p + 1, 3.0);
  pr.curve.sigma_s2 = 0.6;
  pr.curve.sigma_e2 = 0.4;
  return pr;
}

double mvn_logpdf(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd a = llt.matrixL().solve(x - mean);
  return -0.5 * a.squaredNorm() - MatrixXd(llt.matrixL()).diagonal().array().log().sum() -
         0.5 * static_cast<double>(x.size()) * std::log(2 * M_PI);
}

double gamma_logpdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1) * std::log(x) - rate * x;
}

}  // namespace

TEST_CASE("dataset construction rescales predictors") {
  MatrixXd x(3, 2);
  x << 0, 10, 5, 20, 10, 30;
  Locations s = Locations::Zero(3, 2);
  const Dataset d = make_dataset(VectorXd::Zero(3), x, s);
  CHECK(d.x(0, 0) == -1.0);
  CHECK(d.x(1, 0) == doctest::Approx(0.0));
  CHECK(d.x(2, 1) == 1.0);
  CHECK_FALSE(d.clamped);
  MatrixXd out(1, 2);
  out << 20, 25;
  const Dataset held = make_dataset(VectorXd::Zero(1), out, Locations::Zero(1, 2), d.rescale);
  CHECK(held.clamped);
  CHECK(held.x(0, 0) == 1.0);
  CHECK(held.x(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("single observation at the logistic median") {
  Locations s(1, 2);
  s << 0.5, 0.5;
  const Dataset d = make_dataset(VectorXd::Zero(1), MatrixXd::Zero(1, 1), s, unit_record(1));
  QuantileCurveParams cp = QuantileCurveParams::zeros(1, kM);
  cp.sigma_s2 = 0.3;
  cp.sigma_e2 = 0.7;
  cp.lambda = VectorXd::Ones(2);
  CopulaParams cop;
  cop.alpha = 0.3;
  const auto cache = CorrelationCache::build(s, 2.0, {0.3});
  const LikelihoodResult r = log_likelihood(d, cp, cop, BaseDistribution{}, cache);
  CHECK(r.loglik == doctest::Approx(std::log(0.25)).epsilon(1e-10));
  CHECK(r.u(0) == doctest::Approx(0.5));
}

TEST_CASE("alpha = 0 leaves only the marginal terms") {
  const Problem pr = random_problem(12, 2, 1);
  const auto cache = CorrelationCache::build(pr.data.s, 2.0, {0.2});
  CopulaParams cop;
  cop.alpha = 0.0;
  const LikelihoodResult r = log_likelihood(pr.data, pr.curve, cop, BaseDistribution{}, cache);
  const CoefficientCurves c = build_coefficient_curves(pr.curve, BaseDistribution{});
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pr.data.n(); ++i) {
    const double tau = c.invert(pr.data.y(i), pr.data.x.row(i).transpose());
    sum -= std::log(c.density(tau, pr.data.x.row(i).transpose()));
  }
  CHECK(r.copula == 0.0);
  CHECK(r.loglik == doctest::Approx(sum).epsilon(1e-9));
}

TEST_CASE("log-likelihood is invariant to row order") {
  const Problem pr = random_problem(10, 2, 2);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(10);
  perm.setIdentity();
  std::mt19937_64 rng(3);
  std::shuffle(perm.indices().data(), perm.indices().data() + 10, rng);
  const Locations sp = perm * pr.data.s;
  const Dataset dp = make_dataset(perm * pr.data.y, perm * pr.data.x_raw, sp);
  for (CopulaFamily fam : {CopulaFamily::gaussian, CopulaFamily::student_t}) {
    CopulaParams cop;
    cop.family = fam;
    cop.alpha = 0.6;
    cop.psi = 4.0;
    const auto c1 = CorrelationCache::build(pr.data.s, 2.0, {0.2});
    const auto c2 = CorrelationCache::build(sp, 2.0, {0.2});
    CHECK(log_likelihood(pr.data, pr.curve, cop, BaseDistribution{}, c1).loglik ==
          doctest::Approx(log_likelihood(dp, pr.curve, cop, BaseDistribution{}, c2).loglik).epsilon(1e-10));
  }
}

TEST_CASE("a distant observation barely changes the copula term") {
  const Problem pr = random_problem(15, 1, 4);
  Locations s2(16, 2);
  s2.topRows(15) = pr.data.s;
  s2.row(15) << 60.0, 60.0;
  VectorXd y2(16);
  y2.head(15) = pr.data.y;
  y2(15) = 0.2;
  MatrixXd x2(16, 1);
  x2.topRows(15) = pr.data.x_raw;
  x2(15, 0) = pr.data.x_raw(0, 0);
  const Dataset d2 = make_dataset(y2, x2, s2, pr.data.rescale);
  CopulaParams cop;
  cop.alpha = 0.7;
  const auto c1 = CorrelationCache::build(pr.data.s, 2.0, {0.2});
  const auto c2 = CorrelationCache::build(s2, 2.0, {0.2});
  const double a = log_likelihood(pr.data, pr.curve, cop, BaseDistribution{}, c1).copula;
  const double b = log_likelihood(d2, pr.curve, cop, BaseDistribution{}, c2).copula;
  CHECK(std::abs(a - b) <= 1e-6);
}

TEST_CASE("per-observation terms") {
  SUBCASE("single observation with a zero spatial effect") {
    Locations s(1, 2);
    s << 0.5, 0.5;
    const Dataset d = make_dataset(VectorXd::Zero(1), MatrixXd::Zero(1, 1), s, unit_record(1));
    QuantileCurveParams cp = QuantileCurveParams::zeros(1, kM);
    cp.sigma_s2 = cp.sigma_e2 = 0.5;
    cp.lambda = VectorXd::Ones(2);
    CopulaParams cop;
    cop.alpha = 0.5;
    LatentField lf;
    lf.z = VectorXd::Zero(1);
    lf.w = VectorXd::Zero(1);
    lf.eps = VectorXd::Zero(1);
    lf.v = VectorXd::Constant(1, 0.5);
    const VectorXd t = per_observation_loglik(d, cp, cop, lf, BaseDistribution{});
    CHECK(t(0) - std::log(0.25) == doctest::Approx(-0.5 * std::log(0.5)).epsilon(1e-10));
    CHECK(-0.5 * std::log(0.5) == doctest::Approx(0.346574).epsilon(1e-6));
  }
  SUBCASE("small alpha with zero spatial effect approaches the marginal terms") {
    const Problem pr = random_problem(6, 1, 5);
    const CoefficientCurves c = build_coefficient_curves(pr.curve, BaseDistribution{});
    const MarginalEval m = evaluate_marginal(c, pr.data);
    CopulaParams cop;
    cop.alpha = 1e-8;
    LatentField lf;
    lf.z = m.u.unaryExpr([](double v) { return stats::norm_quantile(v); });
    lf.w = VectorXd::Zero(6);
    lf.eps = lf.z / std::sqrt(1 - cop.alpha);
    lf.v = lf.eps.unaryExpr([](double v) { return stats::norm_cdf(v); });
    const VectorXd t = per_observation_loglik(m, cop, lf);
    CHECK((t - m.log_fy).cwiseAbs().maxCoeff() < 1e-7);
  }
  SUBCASE("change of variables against the joint latent density") {
    // sum_i l_i + log p(W, varphi) = loglik + log p(W, varphi | u) for any latent draw.
    for (CopulaFamily fam : {CopulaFamily::gaussian, CopulaFamily::student_t}) {
      for (int n = 1; n <= 3; ++n) {
        const Problem pr = random_problem(n, 1, 10 + n);
        const auto cache = CorrelationCache::build(pr.data.s, 2.0, {0.3});
        CopulaParams cop;
        cop.family = fam;
        cop.alpha = 0.55;
        cop.psi = 5.0;
        const LikelihoodResult r = log_likelihood(pr.data, pr.curve, cop, BaseDistribution{}, cache);
        const VectorXd z = latent_scores(r.u, fam, cop.psi);
        std::mt19937_64 rng(7);
        const LatentField lf = recover_latents(z, fam, cop.alpha, cop.psi, cache.entry(0), rng);
        const VectorXd terms = per_observation_loglik(pr.data, pr.curve, cop, lf, BaseDistribution{});
        const MatrixXd k = matern_matrix(pr.data.s, 2.0, 0.3);
        const LatentPosterior post = latent_posterior(z, fam, cop.alpha, cop.psi, cache.entry(0));
        double prior = mvn_logpdf(lf.w, VectorXd::Zero(n), cop.alpha * k / lf.varphi);
        double postd = mvn_logpdf(lf.w, post.mean, post.cov / lf.varphi);
        if (fam == CopulaFamily::student_t) {
          prior += gamma_logpdf(lf.varphi, cop.psi / 2, cop.psi / 2);
          postd += gamma_logpdf(lf.varphi, post.gamma_shape, post.gamma_rate);
        }
        CHECK(terms.sum() + prior == doctest::Approx(r.loglik + postd).epsilon(1e-6));
      }
    }
  }
}
