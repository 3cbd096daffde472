#include "stochinv/pce.hpp"

#include "stochinv/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace stochinv {

double hermite(int n, double x) {
  if (n < 0) throw InvalidArgument("Hermite degree must be >= 0");
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = x;
  for (int k = 1; k < n; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

Eigen::VectorXd hermite_all(int order, double x) {
  if (order < 0) throw InvalidArgument("Hermite degree must be >= 0");
  Eigen::VectorXd h(order + 1);
  h[0] = 1.0;
  if (order >= 1) h[1] = x;
  for (int k = 1; k < order; ++k) h[k + 1] = x * h[k] - k * h[k - 1];
  return h;
}

QuadratureRule gauss_hermite(int points) {
  if (points < 1) throw InvalidArgument("quadrature needs at least one point");
  // Golub-Welsch on the Jacobi matrix of the monic probabilists' recurrence.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(points, points);
  for (int k = 1; k < points; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  QuadratureRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = eig.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  // Exact symmetry of the rule.
  for (int q = 0; q < points / 2; ++q) {
    const int p = points - 1 - q;
    const double x = 0.5 * (rule.nodes[p] - rule.nodes[q]);
    const double w = 0.5 * (rule.weights[p] + rule.weights[q]);
    rule.nodes[q] = -x;
    rule.nodes[p] = x;
    rule.weights[q] = rule.weights[p] = w;
  }
  if (points % 2 == 1) rule.nodes[points / 2] = 0.0;
  return rule;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double silverman_bandwidth(const Eigen::VectorXd& samples) {
  const Eigen::Index M = samples.size();
  if (M < 2) throw InvalidArgument("bandwidth needs at least two samples");
  const double mean = samples.mean();
  const double sd = std::sqrt((samples.array() - mean).square().sum() / static_cast<double>(M - 1));
  return 1.06 * sd * std::pow(static_cast<double>(M), -0.2);
}

double kde_cdf(const Eigen::VectorXd& samples, double h, double x) {
  const Eigen::Index M = samples.size();
  double acc = 0.0;
  if (h > 0.0) {
    for (Eigen::Index l = 0; l < M; ++l) acc += standard_normal_cdf((x - samples[l]) / h);
  } else {
    for (Eigen::Index l = 0; l < M; ++l) acc += samples[l] <= x ? 1.0 : 0.0;
  }
  return acc / static_cast<double>(M);
}

double empirical_icdf(const Eigen::VectorXd& samples, double h, double p) {
  if (samples.size() < 2) throw InvalidArgument("inverse CDF needs at least two samples");
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("probability must lie in (0, 1), got " + std::to_string(p));
  if (!(h >= 0.0) || !std::isfinite(h)) throw InvalidArgument("bandwidth must be finite and >= 0");
  if (!samples.allFinite()) throw InvalidArgument("samples must be finite");

  if (h == 0.0) {
    std::vector<double> sorted(samples.data(), samples.data() + samples.size());
    std::sort(sorted.begin(), sorted.end());
    const auto M = static_cast<double>(sorted.size());
    // Smallest k with k / M >= p, guarding against p * M rounding up past an integer.
    auto k = static_cast<std::size_t>(std::ceil(p * M));
    if (k > 1 && static_cast<double>(k - 1) / M >= p) --k;
    k = std::clamp<std::size_t>(k, 1, sorted.size());
    return sorted[k - 1];
  }

  double lo = samples.minCoeff() - 8.0 * h;
  double hi = samples.maxCoeff() + 8.0 * h;
  double step = 8.0 * h;
  while (kde_cdf(samples, h, lo) > p) {
    lo -= step;
    step *= 2.0;
  }
  step = 8.0 * h;
  while (kde_cdf(samples, h, hi) < p) {
    hi += step;
    step *= 2.0;
  }
  double flo = kde_cdf(samples, h, lo);
  double fhi = kde_cdf(samples, h, hi);
  for (int it = 0; it < 200 && fhi - flo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = kde_cdf(samples, h, mid);
    if (fm < p) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  return 0.5 * (lo + hi);
}

PceModel fit_pce(const Eigen::MatrixXd& Xi, const PceOptions& options) {
  const int P = options.order;
  const int Q = options.quadrature_points;
  if (P < 1) throw InvalidArgument("PCE order must be >= 1");
  if (Q < 2 * P + 1) {
    throw InvalidArgument("quadrature with " + std::to_string(Q) + " points under-resolves order " +
                          std::to_string(P) + " (need >= " + std::to_string(2 * P + 1) + ")");
  }
  if (Xi.rows() < 2) throw InvalidArgument("PCE fit needs at least two samples");
  if (!Xi.allFinite()) throw InvalidArgument("PCE samples must be finite");

  const QuadratureRule rule = gauss_hermite(Q);
  Eigen::MatrixXd basis(Q, P + 1);
  Eigen::VectorXd probs(Q);
  for (int q = 0; q < Q; ++q) {
    basis.row(q) = hermite_all(P, rule.nodes[q]).transpose();
    probs[q] = std::clamp(standard_normal_cdf(rule.nodes[q]), 1e-15, 1.0 - 1e-15);
  }
  Eigen::VectorXd factorial(P + 1);
  factorial[0] = 1.0;
  for (int n = 1; n <= P; ++n) factorial[n] = factorial[n - 1] * n;

  PceModel model;
  model.order = P;
  model.source_samples = Xi;
  const Eigen::Index r = Xi.cols();
  model.coeffs.resize(r, P + 1);
  model.bandwidths.resize(r);
  for (Eigen::Index l = 0; l < r; ++l) {
    const Eigen::VectorXd s = Xi.col(l);
    const double h = silverman_bandwidth(s);
    model.bandwidths[l] = h;
    Eigen::VectorXd f(Q);
    for (int q = 0; q < Q; ++q) f[q] = empirical_icdf(s, h, probs[q]);
    const Eigen::VectorXd proj = basis.transpose() * rule.weights.cwiseProduct(f);
    model.coeffs.row(l) = proj.cwiseQuotient(factorial).transpose();
  }
  return model;
}

namespace {

void check_eta(const PceModel& model, const Eigen::VectorXd& eta) {
  if (model.order < 1 || model.coeffs.size() == 0) throw InvalidArgument("PCE model is not fitted");
  if (eta.size() != model.dimension()) {
    throw InvalidArgument("eta has length " + std::to_string(eta.size()) + ", expected " +
                          std::to_string(model.dimension()));
  }
}

}  // namespace

Eigen::VectorXd eval_pce(const PceModel& model, const Eigen::VectorXd& eta) {
  check_eta(model, eta);
  Eigen::VectorXd xi(eta.size());
  for (Eigen::Index l = 0; l < eta.size(); ++l) xi[l] = model.coeffs.row(l).dot(hermite_all(model.order, eta[l]));
  return xi;
}

Eigen::VectorXd pce_derivative(const PceModel& model, const Eigen::VectorXd& eta) {
  check_eta(model, eta);
  Eigen::VectorXd d(eta.size());
  for (Eigen::Index l = 0; l < eta.size(); ++l) {
    const Eigen::VectorXd h = hermite_all(model.order - 1, eta[l]);
    double acc = 0.0;
    for (int n = 1; n <= model.order; ++n) acc += model.coeffs(l, n) * n * h[n - 1];
    d[l] = acc;
  }
  return d;
}

std::vector<int> monotonicity_violations(const PceModel& model, double lo, double hi, int grid_points) {
  if (grid_points < 2 || !(hi > lo)) throw InvalidArgument("monotonicity grid is empty");
  std::vector<int> out;
  const int r = model.dimension();
  for (int l = 0; l < r; ++l) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(r);
    for (int g = 0; g < grid_points; ++g) {
      e[l] = lo + (hi - lo) * g / (grid_points - 1);
      if (pce_derivative(model, e)[l] < 0.0) {
        out.push_back(l);
        break;
      }
    }
  }
  return out;
}

}  // namespace stochinv
