#include "jsqr/kernels.hpp"

#include "jsqr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace jsqr {

namespace {

void require_finite_positive(double v, const char* what) {
  if (!std::isfinite(v) || v <= 0.0)
    throw DomainError(std::string(what) + " must be finite and positive");
}

}  // namespace

void KernelSpec::validate() const {
  require_finite_positive(nu, "nu");
  require_finite_positive(phi, "phi");
  require_finite_positive(lambda, "lambda");
}

double KernelSpec::operator()(double distance) const {
  return family == KernelFamily::matern ? matern_correlation(distance, nu, phi)
                                        : se_correlation(distance, lambda);
}

double matern_correlation(double d, double nu, double phi) {
  require_finite_positive(nu, "nu");
  require_finite_positive(phi, "phi");
  if (!std::isfinite(d) || d < 0.0) throw DomainError("distance must be finite and nonnegative");
  if (d == 0.0) return 1.0;

  const double x = std::sqrt(2.0 * nu) * d / phi;
  if (nu == 0.5) return std::exp(-x);
  if (nu == 1.5) return (1.0 + x) * std::exp(-x);
  if (nu == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);

  if (x > 700.0) return 0.0;
  const double k = std::cyl_bessel_k(nu, x);
  if (k == 0.0) return 0.0;
  const double log_rho = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x) + std::log(k);
  return std::clamp(std::exp(log_rho), 0.0, 1.0);
}

double se_correlation(double d, double lambda) {
  require_finite_positive(lambda, "lambda");
  if (!std::isfinite(d) || d < 0.0) throw DomainError("distance must be finite and nonnegative");
  return std::exp(-lambda * lambda * d);
}

double matern_effective_range(double nu, double phi, double threshold) {
  require_finite_positive(nu, "nu");
  require_finite_positive(phi, "phi");
  if (!(threshold > 0.0 && threshold < 1.0)) throw DomainError("threshold must lie in (0,1)");

  // The correlation depends on d/phi only: solve at phi = 1 and rescale.
  double lo = 0.0, hi = 1.0;
  while (matern_correlation(hi, nu, 1.0) > threshold) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (matern_correlation(mid, nu, 1.0) > threshold ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) * phi;
}

double max_pairwise_distance(const Locations& s) {
  double dmax = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = i + 1; j < s.rows(); ++j)
      dmax = std::max(dmax, (s.row(i) - s.row(j)).norm());
  return dmax;
}

std::vector<double> phi_grid_from_effective_range(const Locations& s, double nu, int G) {
  if (s.rows() < 2) throw DomainError("need at least two locations for the decay grid");
  if (G < 1) throw DomainError("grid size must be positive");
  const double dmax = max_pairwise_distance(s);
  if (!(dmax > 0.0)) throw DomainError("all locations coincide; maximal distance is zero");

  const double unit_range = matern_effective_range(nu, 1.0);
  const double phi_lo = 0.25 * dmax / unit_range;
  const double phi_hi = 0.75 * dmax / unit_range;
  if (G == 1) return {0.5 * (phi_lo + phi_hi)};

  std::vector<double> grid(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) grid[g] = phi_lo + (phi_hi - phi_lo) * g / (G - 1);
  return grid;
}

Eigen::MatrixXd matern_matrix(const Locations& s, double nu, double phi) {
  const Eigen::Index n = s.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = matern_correlation((s.row(i) - s.row(j)).norm(), nu, phi);
      k(i, j) = r;
      k(j, i) = r;
    }
  }
  return k;
}

Eigen::VectorXd matern_cross(const Locations& s, const Eigen::Vector2d& target, double nu,
                             double phi) {
  Eigen::VectorXd k(s.rows());
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    k(i) = matern_correlation((s.row(i).transpose() - target).norm(), nu, phi);
  return k;
}

Eigen::VectorXd SpectralEntry::project(const Eigen::VectorXd& v) const {
  return eigenvectors.transpose() * v;
}

CorrelationCache CorrelationCache::build(const Locations& s, double nu,
                                         const std::vector<double>& phi_grid) {
  if (phi_grid.empty()) throw DomainError("decay grid is empty");
  for (std::size_t g = 1; g < phi_grid.size(); ++g)
    if (!(phi_grid[g] > phi_grid[g - 1])) throw DomainError("decay grid must be strictly increasing");

  CorrelationCache cache;
  cache.nu_ = nu;
  cache.phi_grid_ = phi_grid;
  cache.locations_ = s;
  cache.entries_.reserve(phi_grid.size());

  for (std::size_t g = 0; g < phi_grid.size(); ++g) {
    SpectralEntry entry;
    entry.phi = phi_grid[g];
    if (s.rows() == 0) {
      cache.entries_.push_back(std::move(entry));
      continue;
    }
    const Eigen::MatrixXd k = matern_matrix(s, nu, phi_grid[g]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
    if (solver.info() != Eigen::Success)
      throw NumericalError("eigendecomposition failed at decay grid index " + std::to_string(g));

    entry.eigenvalues = solver.eigenvalues();
    const double tol = -1e-10 * std::max(1.0, entry.eigenvalues.maxCoeff());
    for (Eigen::Index i = 0; i < entry.eigenvalues.size(); ++i) {
      double& ev = entry.eigenvalues(i);
      if (ev < tol)
        throw NumericalError("negative eigenvalue " + std::to_string(ev) +
                             " at decay grid index " + std::to_string(g));
      ev = std::max(ev, 0.0);
    }
    entry.eigenvectors = solver.eigenvectors();
    cache.entries_.push_back(std::move(entry));
  }
  return cache;
}

Eigen::VectorXd CorrelationCache::project_all(const Eigen::VectorXd& v) const {
  const Eigen::Index n = static_cast<Eigen::Index>(this->n());
  Eigen::VectorXd out(n * static_cast<Eigen::Index>(entries_.size()));
  for (std::size_t g = 0; g < entries_.size(); ++g)
    out.segment(static_cast<Eigen::Index>(g) * n, n).noalias() = entries_[g].eigenvectors.transpose() * v;
  return out;
}

}  // namespace jsqr
