#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace jsqr {

/// Planar locations, one row per site.
using Locations = Eigen::Matrix<double, Eigen::Dynamic, 2>;

enum class KernelFamily { matern, squared_exponential };

struct KernelSpec {
  KernelFamily family = KernelFamily::matern;
  double nu = 2.0;      // Matern smoothness (fixed by the user)
  double phi = 0.3;     // decay, same units as the locations
  double lambda = 1.0;  // SE rescaling, only for the quantile-level GP priors

  void validate() const;
  double operator()(double distance) const;
};

/// Matern correlation 2^{1-nu}/Gamma(nu) (sqrt(2 nu) d/phi)^nu K_nu(sqrt(2 nu) d/phi).
double matern_correlation(double d, double nu, double phi);

/// exp(-lambda^2 d). Distance enters linearly; callers wanting the squared
/// exponential in a lag h pass d = h^2.
double se_correlation(double d, double lambda);

/// Distance at which the Matern correlation falls to `threshold`.
double matern_effective_range(double nu, double phi, double threshold = 0.05);

double max_pairwise_distance(const Locations& s);

/// G equally spaced decay values whose effective ranges span
/// [D_max/4, 3 D_max/4]. G = 1 yields the midpoint.
std::vector<double> phi_grid_from_effective_range(const Locations& s, double nu, int G);

Eigen::MatrixXd matern_matrix(const Locations& s, double nu, double phi);
Eigen::VectorXd matern_cross(const Locations& s, const Eigen::Vector2d& target, double nu,
                             double phi);

/// Eigendecomposition K = V diag(lambda) V^T of one Matern correlation matrix.
struct SpectralEntry {
  double phi = 0.0;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;

  std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
  /// V^T v
  Eigen::VectorXd project(const Eigen::VectorXd& v) const;
};

/// Spectra of K(phi_g) for every value of the discrete decay grid. Immutable
/// once built; safe to share between chains.
class CorrelationCache {
 public:
  CorrelationCache() = default;
  static CorrelationCache build(const Locations& s, double nu, const std::vector<double>& phi_grid);

  std::size_t grid_size() const { return entries_.size(); }
  std::size_t n() const { return static_cast<std::size_t>(locations_.rows()); }
  double nu() const { return nu_; }
  const std::vector<double>& phi_grid() const { return phi_grid_; }
  const Locations& locations() const { return locations_; }
  const SpectralEntry& entry(std::size_t g) const { return entries_.at(g); }

  /// V_g^T v for every g, stacked as a (G*n) vector.
  Eigen::VectorXd project_all(const Eigen::VectorXd& v) const;

 private:
  double nu_ = 0.0;
  std::vector<double> phi_grid_;
  Locations locations_;
  std::vector<SpectralEntry> entries_;
};

}  // namespace jsqr
