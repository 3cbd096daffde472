#pragma once

// One-dimensional Hermite chaos expansions xi_l = sum_n c_{n,l} He_n(eta_l),
// fitted per component by matching a kernel-smoothed empirical CDF.

#include <Eigen/Core>

#include <vector>

namespace stochinv {

/// Probabilists' Hermite polynomial He_n(x).
double hermite(int n, double x);

/// He_0(x) .. He_order(x).
Eigen::VectorXd hermite_all(int order, double x);

/// Gauss-Hermite rule for the standard normal weight; weights sum to one.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

QuadratureRule gauss_hermite(int points);

double standard_normal_cdf(double x);

/// Silverman's rule h = 1.06 sd M^(-1/5).
double silverman_bandwidth(const Eigen::VectorXd& samples);

/// (1/M) sum Phi((x - s_l) / h); the plain empirical CDF when h == 0.
double kde_cdf(const Eigen::VectorXd& samples, double h, double x);

/// Inverse of kde_cdf. With h == 0 this is the indicator-CDF inverse
/// min { s_l : F(s_l) >= p }.
double empirical_icdf(const Eigen::VectorXd& samples, double h, double p);

struct PceOptions {
  int order = 10;
  int quadrature_points = 64;
};

struct PceModel {
  int order = 0;
  Eigen::MatrixXd coeffs;          // r x (order + 1)
  Eigen::VectorXd bandwidths;      // per component
  Eigen::MatrixXd source_samples;  // M x r

  int dimension() const { return static_cast<int>(coeffs.rows()); }
};

/// Fits every column of Xi (M x r) independently.
PceModel fit_pce(const Eigen::MatrixXd& Xi, const PceOptions& options = {});

Eigen::VectorXd eval_pce(const PceModel& model, const Eigen::VectorXd& eta);

/// Diagonal of d xi / d eta.
Eigen::VectorXd pce_derivative(const PceModel& model, const Eigen::VectorXd& eta);

/// Components whose map eta -> xi decreases somewhere on [lo, hi].
std::vector<int> monotonicity_violations(const PceModel& model, double lo = -4.0, double hi = 4.0,
                                         int grid_points = 801);

}  // namespace stochinv
