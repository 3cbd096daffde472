#include "stochinv/mesh_fem.hpp"

#include "stochinv/error.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>

namespace stochinv {

namespace {

std::atomic<std::uint64_t> g_factorizations{0};
std::atomic<std::uint64_t> g_solves{0};

// Reference-square corners, counter-clockwise.
constexpr double kCornerXi[4] = {-1.0, 1.0, 1.0, -1.0};
constexpr double kCornerEta[4] = {-1.0, -1.0, 1.0, 1.0};

struct QuadraturePoint {
  Eigen::Vector4d N;
  Eigen::Matrix<double, 4, 2> dN;  // physical derivatives d/dx, d/dy
  double dV = 0.0;                 // det(J) * weight
};

using ElementQuadrature = std::array<QuadraturePoint, 4>;

ElementQuadrature element_quadrature(const Mesh& mesh, int e) {
  const auto& conn = mesh.elements[static_cast<std::size_t>(e)];
  const double g = 1.0 / std::sqrt(3.0);
  const double gauss[2] = {-g, g};
  ElementQuadrature out;
  int q = 0;
  for (double eta : gauss) {
    for (double xi : gauss) {
      QuadraturePoint& qp = out[static_cast<std::size_t>(q++)];
      Eigen::Matrix<double, 4, 2> dRef;
      for (int a = 0; a < 4; ++a) {
        qp.N[a] = 0.25 * (1.0 + xi * kCornerXi[a]) * (1.0 + eta * kCornerEta[a]);
        dRef(a, 0) = 0.25 * kCornerXi[a] * (1.0 + eta * kCornerEta[a]);
        dRef(a, 1) = 0.25 * kCornerEta[a] * (1.0 + xi * kCornerXi[a]);
      }
      Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
      for (int a = 0; a < 4; ++a) {
        const Eigen::Vector2d& x = mesh.node_coords[static_cast<std::size_t>(conn[static_cast<std::size_t>(a)])];
        J(0, 0) += dRef(a, 0) * x.x();
        J(0, 1) += dRef(a, 0) * x.y();
        J(1, 0) += dRef(a, 1) * x.x();
        J(1, 1) += dRef(a, 1) * x.y();
      }
      const double det = J.determinant();
      if (!(det > 0.0)) {
        throw InvalidArgument("element " + std::to_string(e) + " has non-positive Jacobian determinant");
      }
      qp.dN = dRef * J.inverse().transpose();
      qp.dV = det;  // unit Gauss weights
    }
  }
  return out;
}

using ElementMatrix = Eigen::Matrix<double, 8, 8>;

ElementMatrix element_stiffness(const ElementQuadrature& quad, const Eigen::Vector4d& lam,
                                const Eigen::Vector4d& mu) {
  ElementMatrix Ke = ElementMatrix::Zero();
  for (const auto& qp : quad) {
    const double l = qp.N.dot(lam);
    const double m = qp.N.dot(mu);
    Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
    for (int a = 0; a < 4; ++a) {
      B(0, 2 * a) = qp.dN(a, 0);
      B(1, 2 * a + 1) = qp.dN(a, 1);
      B(2, 2 * a) = qp.dN(a, 1);
      B(2, 2 * a + 1) = qp.dN(a, 0);
    }
    Eigen::Matrix3d D;
    D << l + 2.0 * m, l, 0.0, l, l + 2.0 * m, 0.0, 0.0, 0.0, m;
    Ke.noalias() += B.transpose() * D * B * qp.dV;
  }
  return Ke;
}

void check_material(const Mesh& mesh, const MaterialField& mat) {
  if (mat.lambda.size() != mesh.node_count() || mat.mu.size() != mesh.node_count()) {
    throw InvalidArgument("material field length does not match mesh node count");
  }
  if (!mat.lambda.allFinite() || !mat.mu.allFinite()) {
    throw InvalidArgument("material field contains non-finite values");
  }
}

template <typename Visitor>
void for_each_element_stiffness(const Mesh& mesh, const MaterialField& mat, Visitor&& visit) {
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& conn = mesh.elements[static_cast<std::size_t>(e)];
    Eigen::Vector4d lam, mu;
    for (int a = 0; a < 4; ++a) {
      lam[a] = mat.lambda[conn[static_cast<std::size_t>(a)]];
      mu[a] = mat.mu[conn[static_cast<std::size_t>(a)]];
    }
    visit(conn, element_stiffness(element_quadrature(mesh, e), lam, mu));
  }
}

// Nodes of a boundary set ordered along the edge.
std::vector<int> ordered_edge(const Mesh& mesh, Boundary b) {
  std::vector<int> nodes;
  switch (b) {
    case Boundary::bottom:
      for (int i = 0; i <= mesh.nx; ++i) nodes.push_back(mesh.node_index(i, 0));
      break;
    case Boundary::top:
      for (int i = 0; i <= mesh.nx; ++i) nodes.push_back(mesh.node_index(i, mesh.ny));
      break;
    case Boundary::left:
      for (int j = 0; j <= mesh.ny; ++j) nodes.push_back(mesh.node_index(0, j));
      break;
    case Boundary::right:
      for (int j = 0; j <= mesh.ny; ++j) nodes.push_back(mesh.node_index(mesh.nx, j));
      break;
  }
  return nodes;
}

}  // namespace

std::string_view to_string(Boundary b) {
  switch (b) {
    case Boundary::bottom: return "bottom";
    case Boundary::top: return "top";
    case Boundary::left: return "left";
    case Boundary::right: return "right";
  }
  return "?";
}

Boundary boundary_from_string(std::string_view name) {
  for (Boundary b : kAllBoundaries) {
    if (to_string(b) == name) return b;
  }
  throw InvalidArgument("unknown boundary '" + std::string(name) + "'");
}

Mesh build_structured_mesh(int nx, int ny, double width, double height) {
  if (nx < 1 || ny < 1) throw InvalidArgument("mesh needs at least one element per axis");
  if (!(width > 0.0) || !(height > 0.0)) throw InvalidArgument("mesh extent must be positive");

  Mesh mesh;
  mesh.nx = nx;
  mesh.ny = ny;
  mesh.width = width;
  mesh.height = height;
  mesh.node_coords.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      mesh.node_coords.emplace_back(width * i / nx, height * j / ny);
    }
  }
  mesh.elements.reserve(static_cast<std::size_t>(nx * ny));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      mesh.elements.push_back({mesh.node_index(i, j), mesh.node_index(i + 1, j),
                               mesh.node_index(i + 1, j + 1), mesh.node_index(i, j + 1)});
    }
  }
  for (Boundary b : kAllBoundaries) mesh.boundary_sets[b] = ordered_edge(mesh, b);
  return mesh;
}

void validate(const Mesh& mesh) {
  if (mesh.node_count() != (mesh.nx + 1) * (mesh.ny + 1)) throw InvalidArgument("mesh node count mismatch");
  if (mesh.element_count() != mesh.nx * mesh.ny) throw InvalidArgument("mesh element count mismatch");
  for (int e = 0; e < mesh.element_count(); ++e) element_quadrature(mesh, e);
  for (Boundary b : kAllBoundaries) {
    if (!mesh.boundary_sets.contains(b)) throw InvalidArgument("mesh lacks boundary set " + std::string(to_string(b)));
  }
}

MaterialField MaterialField::from_log_lambda(const Eigen::VectorXd& log_lambda) {
  MaterialField m;
  m.lambda = log_lambda.array().exp().matrix();
  m.mu = m.lambda;
  m.poisson_lock = true;
  return m;
}

MaterialField MaterialField::uniform(int node_count, double lambda, double mu) {
  MaterialField m;
  m.lambda = Eigen::VectorXd::Constant(node_count, lambda);
  m.mu = Eigen::VectorXd::Constant(node_count, mu);
  m.poisson_lock = (lambda == mu);
  return m;
}

LoadSpec LoadSpec::self_weight(double rho_g) {
  LoadSpec load;
  load.body_force = Eigen::Vector2d(0.0, -rho_g);
  load.dirichlet[Boundary::bottom] = DirichletCondition{};
  return load;
}

SolverCounters solver_counters() { return {g_factorizations.load(), g_solves.load()}; }

void reset_solver_counters() {
  g_factorizations = 0;
  g_solves = 0;
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const MaterialField& mat) {
  check_material(mesh, mat);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.element_count()) * 64);
  for_each_element_stiffness(mesh, mat, [&](const std::array<int, 4>& conn, const ElementMatrix& Ke) {
    for (int a = 0; a < 8; ++a) {
      const int ga = 2 * conn[static_cast<std::size_t>(a / 2)] + a % 2;
      for (int b = 0; b < 8; ++b) {
        const int gb = 2 * conn[static_cast<std::size_t>(b / 2)] + b % 2;
        triplets.emplace_back(ga, gb, Ke(a, b));
      }
    }
  });
  SparseMatrix K(mesh.dof_count(), mesh.dof_count());
  K.setFromTriplets(triplets.begin(), triplets.end());
  return K;
}

LinearSystem assemble_system(const Mesh& mesh, const MaterialField& mat, const LoadSpec& load) {
  check_material(mesh, mat);
  const int ndof = mesh.dof_count();

  std::vector<char> constrained(static_cast<std::size_t>(ndof), 0);
  Eigen::VectorXd prescribed = Eigen::VectorXd::Zero(ndof);
  for (const auto& [side, bc] : load.dirichlet) {
    if (auto it = load.tractions.find(side); it != load.tractions.end()) {
      if ((bc.fix_x && it->second.x() != 0.0) || (bc.fix_y && it->second.y() != 0.0)) {
        throw InvalidArgument("traction and Dirichlet condition overlap on boundary " +
                              std::string(to_string(side)));
      }
    }
    for (int node : mesh.boundary(side)) {
      if (bc.fix_x) {
        constrained[static_cast<std::size_t>(2 * node)] = 1;
        prescribed[2 * node] = bc.ux;
      }
      if (bc.fix_y) {
        constrained[static_cast<std::size_t>(2 * node + 1)] = 1;
        prescribed[2 * node + 1] = bc.uy;
      }
    }
  }
  if (std::count(constrained.begin(), constrained.end(), 1) == 0) {
    throw NumericalError("singular system: no Dirichlet constraints remove the rigid-body modes");
  }

  Eigen::VectorXd b = Eigen::VectorXd::Zero(ndof);

  // Body force.
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& conn = mesh.elements[static_cast<std::size_t>(e)];
    for (const auto& qp : element_quadrature(mesh, e)) {
      for (int a = 0; a < 4; ++a) {
        const int n = conn[static_cast<std::size_t>(a)];
        b[2 * n] += qp.N[a] * load.body_force.x() * qp.dV;
        b[2 * n + 1] += qp.N[a] * load.body_force.y() * qp.dV;
      }
    }
  }
  // Constant tractions; linear edge shape functions integrate to L/2 per end.
  for (const auto& [side, t] : load.tractions) {
    const auto& nodes = mesh.boundary(side);
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
      const int n0 = nodes[k];
      const int n1 = nodes[k + 1];
      const double len = (mesh.node_coords[static_cast<std::size_t>(n1)] -
                          mesh.node_coords[static_cast<std::size_t>(n0)]).norm();
      for (int n : {n0, n1}) {
        b[2 * n] += 0.5 * len * t.x();
        b[2 * n + 1] += 0.5 * len * t.y();
      }
    }
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(mesh.element_count()) * 64 + static_cast<std::size_t>(ndof));
  for_each_element_stiffness(mesh, mat, [&](const std::array<int, 4>& conn, const ElementMatrix& Ke) {
    for (int a = 0; a < 8; ++a) {
      const int ga = 2 * conn[static_cast<std::size_t>(a / 2)] + a % 2;
      const bool ca = constrained[static_cast<std::size_t>(ga)];
      for (int c = 0; c < 8; ++c) {
        const int gc = 2 * conn[static_cast<std::size_t>(c / 2)] + c % 2;
        const bool cc = constrained[static_cast<std::size_t>(gc)];
        if (!ca && !cc) {
          triplets.emplace_back(ga, gc, Ke(a, c));
        } else if (!ca && cc) {
          b[ga] -= Ke(a, c) * prescribed[gc];
        }
      }
    }
  });
  for (int i = 0; i < ndof; ++i) {
    if (constrained[static_cast<std::size_t>(i)]) {
      triplets.emplace_back(i, i, 1.0);
      b[i] = prescribed[i];
    }
  }

  LinearSystem sys;
  sys.A.resize(ndof, ndof);
  sys.A.setFromTriplets(triplets.begin(), triplets.end());
  sys.b = std::move(b);
  sys.constrained = std::move(constrained);
  return sys;
}

struct Factorization::Impl {
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
};

Factorization::Factorization(const SparseMatrix& A) : impl_(std::make_unique<Impl>()), size_(static_cast<int>(A.rows())) {
  if (A.rows() != A.cols()) throw InvalidArgument("factorization requires a square matrix");
  impl_->ldlt.compute(A);
  ++g_factorizations;
  if (impl_->ldlt.info() != Eigen::Success) {
    throw NumericalError("sparse LDL^T factorization failed (numerical breakdown)");
  }
  const Eigen::VectorXd& D = impl_->ldlt.vectorD();
  for (Eigen::Index k = 0; k < D.size(); ++k) {
    if (!(D[k] > 0.0)) {
      const int original = impl_->ldlt.permutationPinv().indices()[k];
      throw NumericalError("matrix is not positive definite: pivot " + std::to_string(D[k]) +
                           " at row " + std::to_string(original));
    }
  }
}

Factorization::~Factorization() = default;

Eigen::VectorXd Factorization::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != size_) throw InvalidArgument("right-hand side length mismatch");
  ++g_solves;
  return impl_->ldlt.solve(rhs);
}

SolveResult solve_forward(const SparseMatrix& A, const Eigen::VectorXd& b) {
  if (b.size() != A.rows()) throw InvalidArgument("right-hand side length mismatch");
  SolveResult out;
  out.factorization = std::make_shared<const Factorization>(A);
  out.u = out.factorization->solve(b);
  // Normwise backward error; a plain relative residual is too strict once the
  // material contrast makes A badly conditioned.
  const double scale = A.norm() * out.u.norm() + b.norm();
  const double res = (A * out.u - b).norm();
  if (!(res <= 1e-10 * scale) && scale > 0.0) {
    std::ostringstream msg;
    msg << "forward solve backward error " << res / scale << " exceeds 1e-10";
    throw NumericalError(msg.str());
  }
  out.constrained.assign(static_cast<std::size_t>(b.size()), 0);
  return out;
}

SolveResult solve_forward(const LinearSystem& system) {
  SolveResult out = solve_forward(system.A, system.b);
  out.constrained = system.constrained;
  return out;
}

void validate(const ObservationSet& obs, int dof_count, const std::vector<char>* constrained) {
  if (obs.values.size() != obs.size() || obs.weights.size() != obs.size()) {
    throw InvalidArgument("observation values/weights length mismatch");
  }
  std::set<int> seen;
  for (int k = 0; k < obs.size(); ++k) {
    const int d = obs.dof_indices[static_cast<std::size_t>(k)];
    if (d < 0 || d >= dof_count) throw InvalidArgument("observation dof " + std::to_string(d) + " out of range");
    if (!seen.insert(d).second) throw InvalidArgument("duplicate observation dof " + std::to_string(d));
    if (constrained && (*constrained)[static_cast<std::size_t>(d)]) {
      throw InvalidArgument("observation dof " + std::to_string(d) + " is Dirichlet-constrained");
    }
    if (obs.weights[k] < 0.0 || !std::isfinite(obs.weights[k])) {
      throw InvalidArgument("observation weights must be finite and non-negative");
    }
  }
}

Eigen::VectorXd solve_adjoint(const SolveResult& forward, const ObservationSet& obs) {
  const int ndof = static_cast<int>(forward.u.size());
  validate(obs, ndof, forward.constrained.empty() ? nullptr : &forward.constrained);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ndof);
  for (int k = 0; k < obs.size(); ++k) {
    const int d = obs.dof_indices[static_cast<std::size_t>(k)];
    rhs[d] = obs.weights[k] * (forward.u[d] - obs.values[k]);
  }
  return forward.factorization->solve(rhs);
}

double cost_misfit(const Eigen::VectorXd& u, const ObservationSet& obs) {
  validate(obs, static_cast<int>(u.size()));
  double J = 0.0;
  for (int k = 0; k < obs.size(); ++k) {
    const double e = u[obs.dof_indices[static_cast<std::size_t>(k)]] - obs.values[k];
    J += obs.weights[k] * e * e;
  }
  return 0.5 * J;
}

MaterialGradient material_gradient(const Mesh& mesh, const MaterialField& mat, const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& w) {
  check_material(mesh, mat);
  if (u.size() != mesh.dof_count() || w.size() != mesh.dof_count()) {
    throw InvalidArgument("displacement/adjoint length does not match mesh dof count");
  }
  MaterialGradient g;
  g.g_lambda = Eigen::VectorXd::Zero(mesh.node_count());
  g.g_mu = Eigen::VectorXd::Zero(mesh.node_count());
  for (int e = 0; e < mesh.element_count(); ++e) {
    const auto& conn = mesh.elements[static_cast<std::size_t>(e)];
    Eigen::Matrix<double, 4, 2> ue, we;
    for (int a = 0; a < 4; ++a) {
      const int n = conn[static_cast<std::size_t>(a)];
      ue.row(a) << u[2 * n], u[2 * n + 1];
      we.row(a) << w[2 * n], w[2 * n + 1];
    }
    for (const auto& qp : element_quadrature(mesh, e)) {
      // grad(v)(c, k) = d v_c / d x_k
      const Eigen::Matrix2d Gu = ue.transpose() * qp.dN;
      const Eigen::Matrix2d Gw = we.transpose() * qp.dN;
      const Eigen::Matrix2d Eu = 0.5 * (Gu + Gu.transpose());
      const Eigen::Matrix2d Ew = 0.5 * (Gw + Gw.transpose());
      const double div_div = Gu.trace() * Gw.trace();
      const double eps_eps = (Eu.array() * Ew.array()).sum();
      for (int a = 0; a < 4; ++a) {
        const int n = conn[static_cast<std::size_t>(a)];
        g.g_lambda[n] -= qp.N[a] * div_div * qp.dV;
        g.g_mu[n] -= qp.N[a] * 2.0 * eps_eps * qp.dV;
      }
    }
  }
  return g;
}

Eigen::VectorXd MaterialGradient::log_lambda_gradient(const Eigen::VectorXd& log_lambda) const {
  if (log_lambda.size() != g_lambda.size()) throw InvalidArgument("log field length mismatch");
  return ((g_lambda + g_mu).array() * log_lambda.array().exp()).matrix();
}

std::vector<int> boundary_nodes(const Mesh& mesh, const std::vector<Boundary>& which) {
  std::set<int> nodes;
  for (Boundary b : which) {
    const auto& set = mesh.boundary(b);
    nodes.insert(set.begin(), set.end());
  }
  return {nodes.begin(), nodes.end()};
}

ObservationSet observe_nodes(const std::vector<int>& nodes, const Eigen::VectorXd& u,
                             const std::vector<char>& constrained) {
  ObservationSet obs;
  std::vector<double> values;
  for (int n : nodes) {
    for (int c = 0; c < 2; ++c) {
      const int d = 2 * n + c;
      if (d < 0 || d >= u.size()) throw InvalidArgument("observed node out of range");
      if (!constrained.empty() && constrained[static_cast<std::size_t>(d)]) continue;
      obs.dof_indices.push_back(d);
      values.push_back(u[d]);
    }
  }
  obs.values = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  obs.weights = Eigen::VectorXd::Ones(obs.size());
  return obs;
}

}  // namespace stochinv
