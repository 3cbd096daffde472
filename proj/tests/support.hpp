#pragma once

// Shared fixtures for the unit tests.

#include "stochinv/mesh_fem.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace testing_support {

inline Eigen::VectorXd random_binary_log_field(int n, std::uint64_t seed, double lo = 10.0, double hi = 1000.0) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.4);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = std::log(coin(rng) ? lo : hi);
  return y;
}

inline Eigen::VectorXd random_normal(int n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

/// Observations of top/left/right nodes taken from u, perturbed so the misfit
/// is nonzero.
inline stochinv::ObservationSet perturbed_boundary_obs(const stochinv::Mesh& mesh, const stochinv::SolveResult& fwd,
                                                       std::uint64_t seed, double rel = 0.3) {
  using stochinv::Boundary;
  auto obs = stochinv::observe_nodes(stochinv::boundary_nodes(mesh, {Boundary::top, Boundary::left, Boundary::right}),
                                     fwd.u, fwd.constrained);
  const double scale = obs.values.cwiseAbs().maxCoeff();
  obs.values += random_normal(obs.size(), seed, rel * scale);
  return obs;
}

/// max_i |a_i - b_i| / max(|b_i|, floor * |b|_inf)
inline double floored_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-3) {
  const double ref = floor * b.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), ref));
  }
  return worst;
}

}  // namespace testing_support
