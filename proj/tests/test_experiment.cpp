#include "stochinv/config.hpp"
#include "stochinv/error.hpp"
#include "stochinv/experiment.hpp"
#include "stochinv/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace stochinv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("stochinv_test_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny() {
  ExperimentConfig c = parse_config(R"({
    "mesh": {"nx": 6, "ny": 6},
    "prior": {"realizations": 40, "seed": 5},
    "reduction": {"kernel": "polynomial", "degree": 3, "dimension": 4},
    "pce": {"order": 4, "quadrature_points": 16},
    "likelihood": {"noise_std_relative": 30.0, "scale": 1000.0},
    "sampling": {"n_samples": 10, "seed": 3},
    "report": {"fidelity_snapshots": 12}
  })");
  return c;
}

StageOptions in(const fs::path& dir) {
  StageOptions o;
  o.out = dir;
  return o;
}

}  // namespace

TEST_CASE("generate writes one column per realization and is reproducible") {
  const fs::path dir = scratch("generate");
  ExperimentConfig c = tiny();
  c.realizations = 2;
  c.truth_index = 0;
  cmd_generate(c, in(dir));
  const Eigen::MatrixXd Y = read_matrix(dir / "snapshots.txt");
  CHECK(Y.cols() == 2);
  CHECK(Y.rows() == 49);

  const std::string first = read_text(dir / "snapshots.txt");
  cmd_generate(c, in(dir));
  CHECK(read_text(dir / "snapshots.txt") == first);

  StageOptions o = in(dir);
  o.seed = 1234;
  cmd_generate(c, o);
  CHECK(read_text(dir / "snapshots.txt") != first);
}

TEST_CASE("fit persists identical models on reruns") {
  const fs::path dir = scratch("fit");
  const ExperimentConfig c = tiny();
  cmd_generate(c, in(dir));
  const FitSummary s = cmd_fit(c, in(dir));
  CHECK(s.dimension == 4);
  const std::string k = read_text(dir / "kpca.bin"), p = read_text(dir / "pce.txt");
  cmd_fit(c, in(dir));
  CHECK(read_text(dir / "kpca.bin") == k);
  CHECK(read_text(dir / "pce.txt") == p);

  const KpcaModel pca = load_kpca(dir / "pca.bin");
  CHECK(pca.kernel().kind == KernelKind::linear);
  CHECK(pca.dimension() == 4);
  CHECK(pca.realizations() == 39);  // truth held out
  CHECK(load_pce(dir / "pce.txt").order == 4);
}

TEST_CASE("noise-free observations equal the truth displacements") {
  const fs::path dir = scratch("obs");
  const ExperimentConfig c = tiny();
  cmd_generate(c, in(dir));
  cmd_synth_obs(c, in(dir));
  const ObservationSet obs = load_observations(dir / "observations.txt");
  const Eigen::VectorXd truth = read_vector(dir / "truth.txt");
  CHECK(truth == Eigen::VectorXd(read_matrix(dir / "snapshots.txt").col(c.truth_index)));

  const Mesh mesh = c.build_mesh();
  const SolveResult f = solve_forward(assemble_system(mesh, MaterialField::from_log_lambda(truth), c.load()));
  for (int i = 0; i < obs.size(); ++i) CHECK(obs.values(i) == f.u(obs.dof_indices[static_cast<std::size_t>(i)]));

  ExperimentConfig noisy = c;
  noisy.observations.noise_std = 1e-6;
  cmd_synth_obs(noisy, in(dir));
  const std::string a = read_text(dir / "observations.txt");
  cmd_synth_obs(noisy, in(dir));
  CHECK(read_text(dir / "observations.txt") == a);
  CHECK(load_observations(dir / "observations.txt").values != obs.values);
}

TEST_CASE("top, left and right boundary selection on the 31x31 mesh") {
  // Count from node coordinates: nodes on the top, left or right edge, minus
  // the two pinned bottom corners, each contributing two free dofs.
  const Mesh mesh = build_structured_mesh(31, 31, 1.0, 1.0);
  int nodes = 0;
  for (int n = 0; n < mesh.node_count(); ++n) {
    const auto& x = mesh.node_coords[static_cast<std::size_t>(n)];
    const bool edge = x.y() == 1.0 || x.x() == 0.0 || x.x() == 1.0;
    if (edge && x.y() != 0.0) ++nodes;
  }
  CHECK(nodes == 3 * 32 - 2 - 2);

  const SolveResult f = solve_forward(
      assemble_system(mesh, MaterialField::uniform(mesh.node_count(), 100.0, 100.0), LoadSpec::self_weight(0.1)));
  const ObservationSet obs =
      observe_nodes(boundary_nodes(mesh, {Boundary::top, Boundary::left, Boundary::right}), f.u, f.constrained);
  CHECK(boundary_nodes(mesh, {Boundary::top, Boundary::left, Boundary::right}).size() == 3 * 32 - 2);
  CHECK(obs.size() == 2 * nodes);
}

TEST_CASE("short inversion and report write well-formed tables") {
  const fs::path dir = scratch("invert");
  const ExperimentConfig c = tiny();
  CHECK_THROWS_AS(cmd_invert(c, in(dir)), StageError);

  cmd_generate(c, in(dir));
  cmd_fit(c, in(dir));
  cmd_synth_obs(c, in(dir));
  CHECK_THROWS_WITH_AS(cmd_report(c, in(dir)), doctest::Contains("report"), StageError);

  const InvertSummary s = cmd_invert(c, in(dir));
  REQUIRE(s.runs.size() == 3);
  CHECK(s.burn_in == 2);
  for (const auto& run : s.runs) {
    CHECK(run.acceptance_rates.size() == 3);
    CHECK(run.chain_errors.empty());
    for (int ch = 0; ch < 3; ++ch) {
      const Eigen::MatrixXd T = read_matrix(dir / "chains" / (run.name + "_chain" + std::to_string(ch) + ".txt"));
      CHECK(T.rows() == 10);
      CHECK(T.cols() == 3 + 4);
    }
    CHECK(read_vector(dir / (run.name + "_posterior_mean.txt")).size() == 49);
    CHECK(read_vector(dir / (run.name + "_posterior_std.txt")).minCoeff() >= 0.0);
    CHECK(read_matrix(dir / (run.name + "_histogram.txt")).cols() == 5);
  }
  CHECK(read_vector(dir / "prior_mean.txt").size() == 49);

  const std::string chain = read_text(dir / "chains" / "kpca_langevin_chain1.txt");
  cmd_invert(c, in(dir));
  CHECK(read_text(dir / "chains" / "kpca_langevin_chain1.txt") == chain);

  const ReportSummary r = cmd_report(c, in(dir));
  const Eigen::MatrixXd ev = read_matrix(dir / "eigenvalues.txt");
  CHECK(ev.rows() == 4);
  for (Eigen::Index k = 1; k < ev.rows(); ++k) CHECK(ev(k, 1) <= ev(k - 1, 1));
  const Eigen::MatrixXd fid = read_matrix(dir / "preimage_fidelity.txt");
  REQUIRE(fid.rows() == 5);
  std::set<int> degrees;
  for (Eigen::Index k = 0; k < fid.rows(); ++k) degrees.insert(static_cast<int>(fid(k, 0)));
  CHECK(degrees == std::set<int>{1, 2, 3, 4, 5});
  CHECK(r.runs.size() == 3);
  CHECK(fs::exists(dir / "diagnostics.txt"));
}

TEST_CASE("chain count override spreads starts over [-2, 2]") {
  CHECK(chain_fills(1) == std::vector<double>{0.0});
  CHECK(chain_fills(3) == std::vector<double>{-2.0, 0.0, 2.0});
  const auto f = chain_fills(5);
  CHECK(f[1] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(chain_fills(0), InvalidArgument);

  const fs::path dir = scratch("chains");
  ExperimentConfig c = tiny();
  c.sampling.runs.resize(1);
  cmd_generate(c, in(dir));
  cmd_fit(c, in(dir));
  cmd_synth_obs(c, in(dir));
  StageOptions o = in(dir);
  o.chains = 2;
  const InvertSummary s = cmd_invert(c, o);
  CHECK(s.runs[0].acceptance_rates.size() == 2);
  CHECK(fs::exists(dir / "chains" / "kpca_langevin_chain1.txt"));
  CHECK_FALSE(fs::exists(dir / "chains" / "kpca_langevin_chain2.txt"));
}

TEST_CASE("pre-image fidelity of the linear kernel at full rank is exact") {
  ChannelSpec cs;
  cs.seed = 8;
  const SnapshotSet set = generate_snapshots(build_structured_mesh(5, 5, 1.0, 1.0), cs, 12);
  const FidelityRow row =
      preimage_fidelity(set.Y, Kernel::linear(), DimensionSelection::fixed(11), PreimageOptions{}, 12);
  CHECK(row.mean_error < 1e-10);
  CHECK(row.converged == 12);
}
