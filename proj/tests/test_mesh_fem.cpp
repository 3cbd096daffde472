#include "stochinv/error.hpp"
#include "stochinv/mesh_fem.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <queue>
#include <set>

using namespace stochinv;
using testing_support::floored_relative_error;
using testing_support::random_binary_log_field;

namespace {

double misfit_at(const Mesh& mesh, const MaterialField& mat, const LoadSpec& load, const ObservationSet& obs) {
  return cost_misfit(solve_forward(assemble_system(mesh, mat, load)).u, obs);
}

}  // namespace

TEST_CASE("structured mesh sizes and coordinates") {
  const Mesh one = build_structured_mesh(1, 1, 1.0, 1.0);
  CHECK(one.node_count() == 4);
  CHECK(one.element_count() == 1);
  for (Boundary b : kAllBoundaries) CHECK(one.boundary(b).size() == 2);

  const Mesh full = build_structured_mesh(31, 31, 1.0, 1.0);
  CHECK(full.node_count() == 1024);
  CHECK(full.element_count() == 961);

  const Mesh m = build_structured_mesh(2, 3, 2.0, 3.0);
  const Eigen::Vector2d corner = m.node_coords[static_cast<std::size_t>(m.node_index(2, 3))];
  CHECK(corner.x() == doctest::Approx(2.0));
  CHECK(corner.y() == doctest::Approx(3.0));

  // Boundary union covers exactly the nodes with an extreme coordinate.
  const auto all = boundary_nodes(m, {kAllBoundaries.begin(), kAllBoundaries.end()});
  std::set<int> expected;
  for (int n = 0; n < m.node_count(); ++n) {
    const auto& x = m.node_coords[static_cast<std::size_t>(n)];
    if (x.x() == 0.0 || x.y() == 0.0 || x.x() == 2.0 || x.y() == 3.0) expected.insert(n);
  }
  CHECK(std::set<int>(all.begin(), all.end()) == expected);
  CHECK_NOTHROW(validate(m));

  CHECK_THROWS_AS(build_structured_mesh(0, 1, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(build_structured_mesh(1, 1, -1.0, 1.0), InvalidArgument);
}

TEST_CASE("single element stiffness has the three rigid-body modes") {
  const Mesh m = build_structured_mesh(1, 1, 1.0, 1.0);
  const SparseMatrix K = assemble_stiffness(m, MaterialField::uniform(4, 1.0, 1.0));
  const Eigen::MatrixXd Kd(K);
  CHECK((Kd - Kd.transpose()).norm() <= 1e-14 * Kd.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Kd);
  const Eigen::VectorXd ev = eig.eigenvalues();
  for (int k = 0; k < 3; ++k) CHECK(std::abs(ev[k]) <= 1e-12 * ev[7]);
  CHECK(ev[3] > 1e-3 * ev[7]);
}

TEST_CASE("patch test reproduces the uniaxial affine field") {
  const double lam = 3.0, mu = 2.0, t = 0.7;
  const Mesh m = build_structured_mesh(4, 3, 2.0, 1.5);
  LoadSpec load;
  load.dirichlet[Boundary::bottom] = DirichletCondition{false, true, 0.0, 0.0};
  load.dirichlet[Boundary::left] = DirichletCondition{true, false, 0.0, 0.0};
  load.tractions[Boundary::top] = Eigen::Vector2d(0.0, -t);
  const LinearSystem sys = assemble_system(m, MaterialField::uniform(m.node_count(), lam, mu), load);
  const Eigen::MatrixXd A(sys.A);
  CHECK((A - A.transpose()).norm() <= 1e-14 * A.norm());

  // Plane strain with sigma_xx = 0, sigma_yy = -t.
  const double eyy = -t / (lam + 2 * mu - lam * lam / (lam + 2 * mu));
  const double exx = -lam / (lam + 2 * mu) * eyy;
  const Eigen::VectorXd u = solve_forward(sys).u;
  double worst = 0.0;
  for (int n = 0; n < m.node_count(); ++n) {
    const auto& x = m.node_coords[static_cast<std::size_t>(n)];
    worst = std::max(worst, std::abs(u[2 * n] - exx * x.x()));
    worst = std::max(worst, std::abs(u[2 * n + 1] - eyy * x.y()));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("displacement is inversely proportional to stiffness") {
  const Mesh m = build_structured_mesh(3, 3, 1.0, 1.0);
  const Eigen::VectorXd y = random_binary_log_field(m.node_count(), 3);
  const LoadSpec load = LoadSpec::self_weight(0.1);
  const Eigen::VectorXd u1 = solve_forward(assemble_system(m, MaterialField::from_log_lambda(y), load)).u;
  const Eigen::VectorXd y10 = (y.array() + std::log(10.0)).matrix();
  const Eigen::VectorXd u10 = solve_forward(assemble_system(m, MaterialField::from_log_lambda(y10), load)).u;
  CHECK((10.0 * u10 - u1).norm() <= 1e-10 * u1.norm());
}

TEST_CASE("assembly rejects unconstrained systems and overlapping conditions") {
  const Mesh m = build_structured_mesh(2, 2, 1.0, 1.0);
  const MaterialField mat = MaterialField::uniform(m.node_count(), 1.0, 1.0);
  LoadSpec free_body;
  free_body.body_force = Eigen::Vector2d(0.0, -1.0);
  CHECK_THROWS_AS(assemble_system(m, mat, free_body), NumericalError);

  LoadSpec clash = LoadSpec::self_weight(1.0);
  clash.tractions[Boundary::bottom] = Eigen::Vector2d(0.0, 1.0);
  CHECK_THROWS_AS(assemble_system(m, mat, clash), InvalidArgument);

  MaterialField bad = mat;
  bad.lambda.resize(3);
  CHECK_THROWS_AS(assemble_system(m, bad, LoadSpec::self_weight(1.0)), InvalidArgument);
}

TEST_CASE("forward solve") {
  SUBCASE("identity system") {
    SparseMatrix I(4, 4);
    I.setIdentity();
    const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(4, 0);
    CHECK((solve_forward(I, e1).u - e1).norm() == doctest::Approx(0.0));
  }
  SUBCASE("random SPD system meets the residual bound") {
    const Eigen::MatrixXd R = testing_support::random_normal(100, 7).reshaped(10, 10);
    const Eigen::MatrixXd S = R * R.transpose() + 10.0 * Eigen::MatrixXd::Identity(10, 10);
    const SparseMatrix A = S.sparseView();
    const Eigen::VectorXd b = testing_support::random_normal(10, 8);
    const SolveResult res = solve_forward(A, b);
    CHECK((A * res.u - b).norm() <= 1e-10 * b.norm());
  }
  SUBCASE("indefinite matrix reports the pivot") {
    Eigen::MatrixXd S = Eigen::MatrixXd::Identity(3, 3);
    S(2, 2) = -1.0;
    const SparseMatrix A = S.sparseView();
    CHECK_THROWS_WITH_AS(solve_forward(A, Eigen::VectorXd::Ones(3)), doctest::Contains("row 2"), NumericalError);
  }
  SUBCASE("pinned bottom under self-weight") {
    const Mesh m = build_structured_mesh(6, 6, 1.0, 1.0);
    const Eigen::VectorXd y = random_binary_log_field(m.node_count(), 11);
    const SolveResult res = solve_forward(assemble_system(m, MaterialField::from_log_lambda(y), LoadSpec::self_weight(0.1)));
    for (int n : m.boundary(Boundary::bottom)) {
      CHECK(res.u[2 * n] == 0.0);
      CHECK(res.u[2 * n + 1] == 0.0);
    }
    CHECK(res.u.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("adjoint solve") {
  const Mesh m = build_structured_mesh(4, 4, 1.0, 1.0);
  const Eigen::VectorXd y = random_binary_log_field(m.node_count(), 5);
  const LinearSystem sys = assemble_system(m, MaterialField::from_log_lambda(y), LoadSpec::self_weight(0.1));
  const SolveResult fwd = solve_forward(sys);

  SUBCASE("zero misfit gives zero adjoint") {
    const auto obs = observe_nodes(boundary_nodes(m, {Boundary::top}), fwd.u, fwd.constrained);
    CHECK(solve_adjoint(fwd, obs).norm() == 0.0);
  }
  SUBCASE("single observed dof is a scaled unit-load response") {
    ObservationSet obs;
    const int d = 2 * m.node_index(2, 4) + 1;
    obs.dof_indices = {d};
    obs.values = Eigen::VectorXd::Constant(1, fwd.u[d] - 0.5);
    obs.weights = Eigen::VectorXd::Ones(1);
    const Eigen::VectorXd w = solve_adjoint(fwd, obs);
    const Eigen::MatrixXd A(sys.A);
    const Eigen::VectorXd unit = A.ldlt().solve(Eigen::VectorXd::Unit(m.dof_count(), d));
    CHECK((w - 0.5 * unit).norm() <= 1e-10 * unit.norm());
  }
  SUBCASE("dense oracle") {
    const ObservationSet obs = testing_support::perturbed_boundary_obs(m, fwd, 9);
    Eigen::VectorXd De = Eigen::VectorXd::Zero(m.dof_count());
    for (int k = 0; k < obs.size(); ++k) {
      const int d = obs.dof_indices[static_cast<std::size_t>(k)];
      De[d] = obs.weights[k] * (fwd.u[d] - obs.values[k]);
    }
    const Eigen::VectorXd w_dense = Eigen::MatrixXd(sys.A).partialPivLu().solve(De);
    const Eigen::VectorXd w = solve_adjoint(fwd, obs);
    CHECK((w - w_dense).norm() <= 1e-10 * w_dense.norm());
  }
  SUBCASE("observation index out of range") {
    ObservationSet obs;
    obs.dof_indices = {m.dof_count()};
    obs.values = Eigen::VectorXd::Zero(1);
    obs.weights = Eigen::VectorXd::Ones(1);
    CHECK_THROWS_AS(solve_adjoint(fwd, obs), InvalidArgument);
  }
}

TEST_CASE("cost misfit") {
  ObservationSet obs;
  obs.dof_indices = {1};
  obs.values = Eigen::VectorXd::Constant(1, -2.0);
  obs.weights = Eigen::VectorXd::Constant(1, 3.0);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(4);
  CHECK(cost_misfit(u, obs) == doctest::Approx(6.0));
  obs.values[0] = 0.0;
  CHECK(cost_misfit(u, obs) == 0.0);

  ObservationSet many;
  many.dof_indices = {0, 3, 5, 6};
  many.values = testing_support::random_normal(4, 1);
  many.weights = testing_support::random_normal(4, 2).cwiseAbs();
  const Eigen::VectorXd v = testing_support::random_normal(8, 3);
  double direct = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double e = v[many.dof_indices[static_cast<std::size_t>(k)]] - many.values[k];
    direct += 0.5 * e * many.weights[k] * e;
  }
  CHECK(cost_misfit(v, many) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("material gradient") {
  const Mesh m = build_structured_mesh(4, 4, 1.0, 1.0);
  const LoadSpec load = LoadSpec::self_weight(0.1);

  SUBCASE("zero adjoint gives zero gradient") {
    const MaterialField mat = MaterialField::from_log_lambda(random_binary_log_field(m.node_count(), 1));
    const Eigen::VectorXd u = solve_forward(assemble_system(m, mat, load)).u;
    const MaterialGradient g = material_gradient(m, mat, u, Eigen::VectorXd::Zero(m.dof_count()));
    CHECK(g.g_lambda.norm() == 0.0);
    CHECK(g.g_mu.norm() == 0.0);
  }
  SUBCASE("divergence-free field gives zero lambda gradient") {
    const MaterialField mat = MaterialField::uniform(m.node_count(), 2.0, 1.0);
    Eigen::VectorXd rot(m.dof_count());
    for (int n = 0; n < m.node_count(); ++n) {
      const auto& x = m.node_coords[static_cast<std::size_t>(n)];
      rot[2 * n] = -x.y();
      rot[2 * n + 1] = x.x();
    }
    const Eigen::VectorXd w = testing_support::random_normal(m.dof_count(), 4);
    CHECK(material_gradient(m, mat, rot, w).g_lambda.cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("independent lambda and mu match central differences") {
    MaterialField mat;
    mat.lambda = random_binary_log_field(m.node_count(), 2).array().exp();
    mat.mu = 0.5 * random_binary_log_field(m.node_count(), 3).array().exp();
    const SolveResult fwd = solve_forward(assemble_system(m, mat, load));
    const ObservationSet obs = testing_support::perturbed_boundary_obs(m, fwd, 4);
    const MaterialGradient g = material_gradient(m, mat, fwd.u, solve_adjoint(fwd, obs));
    Eigen::VectorXd fd_l(m.node_count()), fd_m(m.node_count());
    for (int i = 0; i < m.node_count(); ++i) {
      for (int which = 0; which < 2; ++which) {
        Eigen::VectorXd& p = which == 0 ? mat.lambda : mat.mu;
        const double p0 = p[i];
        // Raw Lame values span 10..1000; a 1e-6 step is round-off limited here.
        const double h = 1e-4 * (1.0 + std::abs(p0));
        p[i] = p0 + h;
        const double jp = misfit_at(m, mat, load, obs);
        p[i] = p0 - h;
        const double jm = misfit_at(m, mat, load, obs);
        p[i] = p0;
        (which == 0 ? fd_l : fd_m)[i] = (jp - jm) / (2 * h);
      }
    }
    CHECK(floored_relative_error(g.g_lambda, fd_l) <= 1e-5);
    CHECK(floored_relative_error(g.g_mu, fd_m) <= 1e-5);
  }
  SUBCASE("length mismatch") {
    const MaterialField mat = MaterialField::uniform(m.node_count(), 1.0, 1.0);
    CHECK_THROWS_AS(material_gradient(m, mat, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)), InvalidArgument);
  }
}

TEST_CASE("log-parameter gradient on an 8x8 mesh matches central differences") {
  const Mesh m = build_structured_mesh(8, 8, 1.0, 1.0);
  const LoadSpec load = LoadSpec::self_weight(0.1);
  Eigen::VectorXd y = random_binary_log_field(m.node_count(), 21);
  const SolveResult fwd = solve_forward(assemble_system(m, MaterialField::from_log_lambda(y), load));
  const ObservationSet obs = testing_support::perturbed_boundary_obs(m, fwd, 22);

  reset_solver_counters();
  const SolveResult f2 = solve_forward(assemble_system(m, MaterialField::from_log_lambda(y), load));
  const Eigen::VectorXd w = solve_adjoint(f2, obs);
  const Eigen::VectorXd g = material_gradient(m, MaterialField::from_log_lambda(y), f2.u, w).log_lambda_gradient(y);
  const SolverCounters c = solver_counters();
  CHECK(c.factorizations == 1);
  CHECK(c.solves == 2);

  Eigen::VectorXd fd(m.node_count());
  for (int i = 0; i < m.node_count(); ++i) {
    const double y0 = y[i];
    const double h = 1e-6 * (1.0 + std::abs(y0));
    y[i] = y0 + h;
    const double jp = misfit_at(m, MaterialField::from_log_lambda(y), load, obs);
    y[i] = y0 - h;
    const double jm = misfit_at(m, MaterialField::from_log_lambda(y), load, obs);
    y[i] = y0;
    fd[i] = (jp - jm) / (2 * h);
  }
  CHECK(floored_relative_error(g, fd) <= 1e-5);
}

TEST_CASE("observations skip constrained dofs") {
  const Mesh m = build_structured_mesh(31, 31, 1.0, 1.0);
  const LinearSystem sys =
      assemble_system(m, MaterialField::uniform(m.node_count(), 10.0, 10.0), LoadSpec::self_weight(0.1));
  const auto nodes = boundary_nodes(m, {Boundary::top, Boundary::left, Boundary::right});
  CHECK(nodes.size() == 3 * 32 - 2);
  const ObservationSet obs = observe_nodes(nodes, Eigen::VectorXd::Zero(m.dof_count()), sys.constrained);
  // The two bottom corners belong to the pinned edge.
  CHECK(obs.size() == 2 * (3 * 32 - 2) - 4);
  CHECK_NOTHROW(validate(obs, m.dof_count(), &sys.constrained));
}
