#pragma once

#include "jsqr/stats.hpp"

#include <Eigen/Dense>

#include <vector>

namespace jsqr {

/// Quantile-level grid. `nodes` runs from 0 to 1 inclusive; the interior nodes
/// 0.001, 0.005, 0.01, 0.02, ..., 0.99, 0.995, 0.999 are where curves are
/// tabulated. 0.5 is always a node.
struct CurveGrid {
  Eigen::VectorXd nodes;
  Eigen::VectorXd knots;  // where the omega functions are parametrized
  Eigen::Index anchor = 0;  // index of tau0 = 0.5 within nodes

  static const CurveGrid& standard();
  static CurveGrid make(const std::vector<double>& interior, const std::vector<double>& knots);

  Eigen::Index size() const { return nodes.size(); }
  Eigen::Index knot_count() const { return knots.size(); }
  /// Interior nodes only (drops 0 and 1).
  std::vector<double> interior() const;
  /// Index k of the cell [nodes(k), nodes(k+1)) containing tau.
  Eigen::Index cell_of(double tau) const;
};

std::vector<double> default_tau_grid();
std::vector<double> default_knots();

struct ZetaTable {
  Eigen::VectorXd zeta;   // zeta at the nodes, zeta(0) = 0, zeta(1) = 1
  Eigen::VectorXd upper;  // 1 - zeta, summed from the right so the upper tail keeps its precision
  Eigen::VectorXd dzeta;  // derivative at the nodes
};

/// zeta(tau) = int_0^tau e^{omega0} / int_0^1 e^{omega0} for omega0 linear
/// between the given nodes. Each cell integral is done exactly, so the rule is
/// the trapezoid applied on the log scale.
ZetaTable zeta_transform(const Eigen::VectorXd& nodes, const Eigen::VectorXd& omega0);

/// Projection radius opposite b on the hypercube [-1,1]^p: |b|_1/|b|_2, and 1
/// at b = 0.
double projection_radius(const Eigen::VectorXd& b);

/// Scaled slope direction w / (a(w) sqrt(1 + |w|^2)). Its l1 norm is below 1,
/// which is what keeps every vertex of [-1,1]^p non-crossing.
Eigen::VectorXd scaled_direction(const Eigen::VectorXd& w);

/// Gram matrix exp(-lambda^2 (k_i - k_j)^2) over the knots plus jitter.
Eigen::MatrixXd se_gram(const Eigen::VectorXd& knots, double lambda, double jitter);
constexpr double kGpJitter = 1e-6;

/// Posterior-mean interpolation of knot values under the squared-exponential
/// GP. Holds the solved weight vector; evaluation is c(t)^T weights.
class GpInterpolant {
 public:
  GpInterpolant(const Eigen::VectorXd& knots, double lambda, const Eigen::VectorXd& values);
  double operator()(double t) const;

 private:
  Eigen::VectorXd knots_;
  double lambda2_;
  Eigen::VectorXd weights_;
};

struct QuantileCurveParams {
  double gamma0 = 0.0;
  Eigen::VectorXd gamma;     // p
  double sigma_s2 = 0.5;
  double sigma_e2 = 0.5;
  Eigen::VectorXd omega0;    // m knot values
  Eigen::MatrixXd omega;     // p x m knot values
  Eigen::VectorXd lambda;    // p + 1 SE rescaling values; lambda(0) belongs to omega0

  static QuantileCurveParams zeros(int p, int m);
  int p() const { return static_cast<int>(gamma.size()); }
  double sigma2() const { return sigma_s2 + sigma_e2; }
  double sigma() const;
  double alpha() const { return sigma_s2 / sigma2(); }
};

class CoefficientCurves;

CoefficientCurves build_coefficient_curves(const QuantileCurveParams& params,
                                           const BaseDistribution& base,
                                           const CurveGrid& grid = CurveGrid::standard());

/// Curves with zeta = identity and a prescribed scaled direction at the
/// interior nodes (rows of `directions`, N x p with the end rows ignored).
/// Used for ground-truth curves specified through their derivatives.
CoefficientCurves curves_from_directions(const BaseDistribution& base, double sigma,
                                         double gamma0, const Eigen::VectorXd& gamma,
                                         const Eigen::MatrixXd& directions,
                                         const CurveGrid& grid = CurveGrid::standard());

/// Tabulated coefficient curves plus the exact between-node model used for
/// evaluation and inversion.
///
/// Within a cell, omega0 is linear in tau (so zeta has a closed form) and the
/// scaled slope direction is linear in t = F0^{-1}(zeta). The two outer cells
/// hold the direction fixed, which extends each curve through the base tail.
class CoefficientCurves {
 public:
  int p() const { return static_cast<int>(gamma_.size()); }
  /// The grid is referenced, not copied; it must outlive the curves.
  const CurveGrid& grid() const { return *grid_; }
  const BaseDistribution& base() const { return base_; }
  double sigma() const { return sigma_; }

  // Node tables, indexed like grid().nodes. Entries at the two end nodes
  // (tau = 0, 1) are not meaningful for beta, t or the derivative curves.
  const Eigen::VectorXd& zeta() const { return zeta_; }
  const Eigen::VectorXd& dzeta() const { return dzeta_; }
  const Eigen::VectorXd& t() const { return t_; }
  const Eigen::VectorXd& beta0() const { return beta0_; }
  const Eigen::MatrixXd& beta() const { return beta_; }
  const Eigen::VectorXd& dbeta0() const { return dbeta0_; }
  const Eigen::MatrixXd& dbeta() const { return dbeta_; }
  const Eigen::MatrixXd& direction() const { return wt_; }

  /// beta0(tau) and beta(tau) at an arbitrary level.
  double beta0_at(double tau) const;
  Eigen::VectorXd beta_at(double tau) const;

  double value(double tau, const Eigen::VectorXd& x) const;
  double density(double tau, const Eigen::VectorXd& x) const;

  /// Q_l(x) at every node; end entries are -inf and +inf.
  Eigen::VectorXd node_values(const Eigen::VectorXd& x) const;
  /// Node values for each row of `x` (n x p), one column per row: N x n.
  Eigen::MatrixXd node_values_rows(const Eigen::MatrixXd& x) const;

  /// Solves Q(tau|x) = y. If `log_fy` is given it receives log f_Y(y|x),
  /// computed at the solution in t so tail clamping does not distort it.
  double invert(double y, const Eigen::VectorXd& x, double* log_fy = nullptr) const;
  double invert(double y, const Eigen::VectorXd& x, const Eigen::VectorXd& nodes_q,
                double* log_fy) const;

  /// Smallest 1 + x^T w over the vertices of [-1,1]^p and all nodes.
  double min_vertex_slope_factor() const;

  friend CoefficientCurves build_coefficient_curves(const QuantileCurveParams&,
                                                    const BaseDistribution&, const CurveGrid&);
  friend CoefficientCurves curves_from_directions(const BaseDistribution&, double, double,
                                                  const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                                  const CurveGrid&);

 private:
  void finalize();
  void check_resolution() const;
  double zeta_in_cell(Eigen::Index k, double tau) const;
  double upper_in_cell(Eigen::Index k, double tau) const;
  double t_from(double z, double upper) const;
  double t_in_cell(Eigen::Index k, double tau) const;
  double tau_from_t(Eigen::Index k, double t) const;
  double log_dzeta_in_cell(Eigen::Index k, double tau) const;
  double slope_factor(Eigen::Index k, double t, const Eigen::VectorXd& x) const;
  double q_in_cell(Eigen::Index k, double t, const Eigen::VectorXd& x, double qk) const;

  const CurveGrid* grid_ = nullptr;
  BaseDistribution base_;
  double sigma_ = 1.0;
  double gamma0_ = 0.0;
  Eigen::VectorXd gamma_;
  Eigen::VectorXd zeta_, upper_, dzeta_, slope_, t_, beta0_, dbeta0_;
  Eigen::MatrixXd beta_, dbeta_, wt_;  // N x p
};

double quantile_value(const CoefficientCurves& curves, double tau, const Eigen::VectorXd& x);
double quantile_density(const CoefficientCurves& curves, double tau, const Eigen::VectorXd& x);
double invert_quantile(const CoefficientCurves& curves, double y, const Eigen::VectorXd& x);

}  // namespace jsqr
