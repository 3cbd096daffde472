#pragma once

// Structured-grid 2D linear elasticity: forward solve, adjoint solve and the
// adjoint-state gradient of a weighted displacement misfit with respect to
// the nodal Lame parameters.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace stochinv {

enum class Boundary { bottom, top, left, right };

inline constexpr std::array<Boundary, 4> kAllBoundaries = {Boundary::bottom, Boundary::top,
                                                           Boundary::left, Boundary::right};

std::string_view to_string(Boundary b);
Boundary boundary_from_string(std::string_view name);

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

/// Uniform quadrilateral grid. Node (i, j) has index j * (nx + 1) + i and
/// degrees of freedom 2 * node (x) and 2 * node + 1 (y).
struct Mesh {
  int nx = 0;
  int ny = 0;
  double width = 0.0;
  double height = 0.0;
  std::vector<Eigen::Vector2d> node_coords;
  std::vector<std::array<int, 4>> elements;  // counter-clockwise
  std::map<Boundary, std::vector<int>> boundary_sets;

  int node_count() const { return static_cast<int>(node_coords.size()); }
  int element_count() const { return static_cast<int>(elements.size()); }
  int dof_count() const { return 2 * node_count(); }
  int node_index(int i, int j) const { return j * (nx + 1) + i; }
  const std::vector<int>& boundary(Boundary b) const { return boundary_sets.at(b); }
};

Mesh build_structured_mesh(int nx, int ny, double width, double height);

/// Nodal Lame parameters (MPa). With poisson_lock the two fields coincide
/// (nu = 0.25) and are driven by a single log field.
struct MaterialField {
  Eigen::VectorXd lambda;
  Eigen::VectorXd mu;
  bool poisson_lock = false;

  static MaterialField from_log_lambda(const Eigen::VectorXd& log_lambda);
  static MaterialField uniform(int node_count, double lambda, double mu);
};

struct DirichletCondition {
  bool fix_x = true;
  bool fix_y = true;
  double ux = 0.0;
  double uy = 0.0;
};

struct LoadSpec {
  Eigen::Vector2d body_force = Eigen::Vector2d::Zero();  // per unit volume
  std::map<Boundary, Eigen::Vector2d> tractions;
  std::map<Boundary, DirichletCondition> dirichlet;

  /// Pinned bottom edge, free elsewhere, self-weight f = (0, -rho_g).
  static LoadSpec self_weight(double rho_g);
};

struct ObservationSet {
  std::vector<int> dof_indices;
  Eigen::VectorXd values;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(dof_indices.size()); }
};

/// Linear system after symmetric Dirichlet elimination.
struct LinearSystem {
  SparseMatrix A;
  Eigen::VectorXd b;
  std::vector<char> constrained;  // per dof
};

/// Counts of expensive linear-algebra events, for cost-contract checks.
struct SolverCounters {
  std::uint64_t factorizations = 0;
  std::uint64_t solves = 0;
};

SolverCounters solver_counters();
void reset_solver_counters();

/// Reusable sparse LDL^T factorization of an SPD matrix.
class Factorization {
 public:
  explicit Factorization(const SparseMatrix& A);
  ~Factorization();
  Factorization(const Factorization&) = delete;
  Factorization& operator=(const Factorization&) = delete;

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  int size() const { return size_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int size_ = 0;
};

struct SolveResult {
  Eigen::VectorXd u;
  std::shared_ptr<const Factorization> factorization;
  std::vector<char> constrained;
};

/// Unconstrained global stiffness (bilinear elements, 2x2 Gauss).
SparseMatrix assemble_stiffness(const Mesh& mesh, const MaterialField& mat);

LinearSystem assemble_system(const Mesh& mesh, const MaterialField& mat, const LoadSpec& load);

SolveResult solve_forward(const LinearSystem& system);
SolveResult solve_forward(const SparseMatrix& A, const Eigen::VectorXd& b);

/// Solves A w = D e with e = u - u_obs, reusing the forward factorization.
Eigen::VectorXd solve_adjoint(const SolveResult& forward, const ObservationSet& obs);

struct MaterialGradient {
  Eigen::VectorXd g_lambda;
  Eigen::VectorXd g_mu;

  /// Gradient with respect to y = ln(lambda) when lambda = mu = exp(y).
  Eigen::VectorXd log_lambda_gradient(const Eigen::VectorXd& log_lambda) const;
};

/// dJ/dlambda_i and dJ/dmu_i for J = 1/2 e^T D e, from the forward field u
/// and the adjoint field w.
MaterialGradient material_gradient(const Mesh& mesh, const MaterialField& mat,
                                   const Eigen::VectorXd& u, const Eigen::VectorXd& w);

double cost_misfit(const Eigen::VectorXd& u, const ObservationSet& obs);

void validate(const Mesh& mesh);
void validate(const ObservationSet& obs, int dof_count, const std::vector<char>* constrained = nullptr);

/// Nodes on the union of the given boundary sets, ascending and unique.
std::vector<int> boundary_nodes(const Mesh& mesh, const std::vector<Boundary>& which);

/// Every unconstrained dof (x and y) of the given nodes, with unit weights.
ObservationSet observe_nodes(const std::vector<int>& nodes, const Eigen::VectorXd& u,
                             const std::vector<char>& constrained);

}  // namespace stochinv
