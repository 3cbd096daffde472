// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance            criteria 1-6, 7 (16x16 smoke variant) and 8
//   acceptance --full     criterion 7 at 31x31, M=1000, 2000 samples per chain
//   acceptance --only N   a single criterion

#include "stochinv/config.hpp"
#include "stochinv/experiment.hpp"
#include "stochinv/kpca.hpp"
#include "stochinv/mcmc.hpp"
#include "stochinv/mesh_fem.hpp"
#include "stochinv/pce.hpp"
#include "stochinv/posterior.hpp"
#include "stochinv/prior_gen.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

using namespace stochinv;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void verdict(const char* id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %s: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::VectorXd normals(int n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

Eigen::MatrixXd reference_ensemble() {
  static const Eigen::MatrixXd Y = [] {
    ChannelSpec spec;  // seed 1
    return generate_snapshots(build_structured_mesh(31, 31, 1.0, 1.0), spec, 1000).Y;
  }();
  return Y;
}

// 1. Adjoint gradient of J with respect to y = ln(lambda) against central
// differences of J on every node.
void criterion_1() {
  const Mesh mesh = build_structured_mesh(8, 8, 1.0, 1.0);
  const LoadSpec load = LoadSpec::self_weight(0.1);
  std::mt19937_64 rng(21);
  std::bernoulli_distribution coin(0.4);
  Eigen::VectorXd y(mesh.node_count());
  for (auto& v : y) v = std::log(coin(rng) ? 10.0 : 1000.0);

  const SolveResult truth = solve_forward(assemble_system(mesh, MaterialField::from_log_lambda(y), load));
  ObservationSet obs =
      observe_nodes(boundary_nodes(mesh, {Boundary::top, Boundary::left, Boundary::right}), truth.u, truth.constrained);
  obs.values += normals(obs.size(), 22, 0.3 * obs.values.cwiseAbs().maxCoeff());

  const SolveResult f = solve_forward(assemble_system(mesh, MaterialField::from_log_lambda(y), load));
  const Eigen::VectorXd w = solve_adjoint(f, obs);
  const Eigen::VectorXd g = material_gradient(mesh, MaterialField::from_log_lambda(y), f.u, w).log_lambda_gradient(y);

  auto J = [&](const Eigen::VectorXd& yy) {
    return cost_misfit(solve_forward(assemble_system(mesh, MaterialField::from_log_lambda(yy), load)).u, obs);
  };
  Eigen::VectorXd fd(mesh.node_count());
  for (int i = 0; i < mesh.node_count(); ++i) {
    Eigen::VectorXd yp = y, ym = y;
    const double h = 1e-6 * (1.0 + std::abs(y[i]));
    yp[i] += h;
    ym[i] -= h;
    fd[i] = (J(yp) - J(ym)) / (2 * h);
  }
  // Per-node relative error, with entries below 1e-3 |fd|_inf measured
  // against that floor.
  const double floor = 1e-3 * fd.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < fd.size(); ++i)
    worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), floor));
  const double normwise = (g - fd).norm() / fd.norm();
  verdict("1", worst <= 1e-5,
          fmt("adjoint vs central FD on 8x8, %d nodes: max rel error %.2e, normwise %.2e (tol 1e-5)",
              mesh.node_count(), worst, normwise));
}

// Explicit feature map of (x . y)^d: sqrt(multinomial coefficient) x^alpha.
Eigen::VectorXd explicit_features(const Eigen::VectorXd& x, int d) {
  std::vector<double> out;
  const int n = static_cast<int>(x.size());
  std::vector<int> alpha(static_cast<std::size_t>(n));
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == n - 1) {
      alpha[static_cast<std::size_t>(pos)] = left;
      double coef = std::tgamma(d + 1.0), mono = 1.0;
      for (int k = 0; k < n; ++k) {
        coef /= std::tgamma(alpha[static_cast<std::size_t>(k)] + 1.0);
        mono *= std::pow(x[k], alpha[static_cast<std::size_t>(k)]);
      }
      out.push_back(std::sqrt(coef) * mono);
      return;
    }
    for (int a = left; a >= 0; --a) {
      alpha[static_cast<std::size_t>(pos)] = a;
      rec(pos + 1, left - a);
    }
  };
  rec(0, d);
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

// 2. Kernel-trick KPCA against PCA of explicit feature vectors.
void criterion_2() {
  double worst_eig = 0.0, worst_coord = 0.0;
  bool dims_ok = true;
  for (int d : {2, 3}) {
    const Eigen::MatrixXd Y = normals(24, 100 + d).reshaped(3, 8);
    Eigen::MatrixXd F(explicit_features(Y.col(0), d).size(), 8);
    for (int m = 0; m < 8; ++m) F.col(m) = explicit_features(Y.col(m), d);
    // N_F = C(N_R + d - 1, d)
    dims_ok = dims_ok && F.rows() == (d == 2 ? 6 : 10);
    const Eigen::MatrixXd Ft = F.colwise() - F.rowwise().mean();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> cov(Ft * Ft.transpose() / 8.0);
    const KpcaModel model = KpcaModel::fit(Y, Kernel::polynomial(d), DimensionSelection::fixed(5));
    const Eigen::Index nf = F.rows();
    for (int k = 0; k < 5; ++k) {
      const double lam = cov.eigenvalues()[nf - 1 - k];
      worst_eig = std::max(worst_eig, std::abs(model.eigenvalues()[k] - lam) / lam);
      const Eigen::VectorXd proj = Ft.transpose() * cov.eigenvectors().col(nf - 1 - k) / std::sqrt(lam);
      const Eigen::VectorXd xi = model.training_coordinates().col(k);
      const double s = proj.dot(xi) >= 0 ? 1.0 : -1.0;
      worst_coord = std::max(worst_coord, (xi - s * proj).cwiseAbs().maxCoeff());
    }
  }
  verdict("2", dims_ok && worst_eig <= 1e-8 && worst_coord <= 1e-8,
          fmt("N_R=3, M=8, d in {2,3}: eigenvalue rel error %.2e, coordinate error %.2e (tol 1e-8)", worst_eig,
              worst_coord));
}

// 3. grad_log_posterior against central differences of log_posterior.
void criterion_3() {
  const Mesh mesh = build_structured_mesh(8, 8, 1.0, 1.0);
  ChannelSpec cs;
  cs.seed = 17;
  const HoldOut h = hold_out(generate_snapshots(mesh, cs, 61), 0);
  auto spec = std::make_shared<PosteriorSpec>();
  auto kpca = std::make_shared<KpcaModel>(KpcaModel::fit(h.rest.Y, Kernel::polynomial(3), DimensionSelection::fixed(5)));
  spec->pce = std::make_shared<PceModel>(fit_pce(kpca->training_coordinates()));
  spec->kpca = kpca;
  spec->mesh = mesh;
  spec->load = LoadSpec::self_weight(0.1);
  const SolveResult fwd = solve_forward(assemble_system(mesh, MaterialField::from_log_lambda(h.truth), spec->load));
  spec->obs = observe_nodes(boundary_nodes(mesh, {Boundary::top, Boundary::left, Boundary::right}), fwd.u,
                            fwd.constrained);
  spec->noise_variance = std::pow(0.05 * spec->obs.values.cwiseAbs().maxCoeff(), 2);
  spec->preimage.tolerance = 1e-14;
  spec->preimage.max_iterations = 20000;

  double worst = 0.0;
  int evaluated = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Eigen::VectorXd eta = normals(5, 300 + s, 0.7);
    const PosteriorEval base = evaluate_posterior(*spec, eta, true);
    if (!base.ok() || base.grad.size() != 5) continue;
    Eigen::VectorXd fd(5);
    const double step = 1e-5;
    bool ok = true;
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd p = eta, m = eta;
      p[k] += step;
      m[k] -= step;
      const PosteriorEval ep = log_posterior(*spec, p, &base.y), em = log_posterior(*spec, m, &base.y);
      ok = ok && ep.ok() && em.ok();
      fd[k] = (ep.log_post - em.log_post) / (2 * step);
    }
    if (!ok) continue;
    worst = std::max(worst, (base.grad - fd).norm() / fd.norm());
    ++evaluated;
  }
  verdict("3", evaluated == 10 && worst <= 1e-4,
          fmt("r=5, d=3, 8x8: %d/10 points, max rel error %.2e (tol 1e-4)", evaluated, worst));
}

// 4. Order-10 PCE samples against the training coordinates, per component.
void criterion_4() {
  const KpcaModel model = KpcaModel::fit(reference_ensemble(), Kernel::polynomial(5), DimensionSelection::fixed(20));
  const PceModel pce = fit_pce(model.training_coordinates(), {10, 64});
  const int n = 20000;
  std::mt19937_64 rng(404);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  int worst_k = 0, over = 0;
  for (int k = 0; k < model.dimension(); ++k) {
    std::vector<double> pce_samples(n), train(static_cast<std::size_t>(model.realizations()));
    for (auto& v : pce_samples) {
      double acc = 0.0;
      const double eta = nd(rng);
      for (int p = 0; p <= pce.order; ++p) acc += pce.coeffs(k, p) * hermite(p, eta);
      v = acc;
    }
    for (int m = 0; m < model.realizations(); ++m) train[static_cast<std::size_t>(m)] = model.training_coordinates()(m, k);
    const double d = ks_distance(pce_samples, train);
    over += d > 0.05 ? 1 : 0;
    if (d > worst) {
      worst = d;
      worst_k = k;
    }
  }
  verdict("4", worst <= 0.05,
          fmt("31x31, M=1000, d=5, r=20, P=10: max KS %.4f at component %d, %d/20 components above 0.05 (tol 0.05)",
              worst, worst_k, over));
}

// 5. MALA on N(0, I_5).
void criterion_5() {
  const GaussianDensity target = GaussianDensity::standard(5);
  std::vector<SamplerConfig> cfgs;
  const double fills[] = {-2.0, 0.0, 2.0};
  for (int c = 0; c < 3; ++c) {
    SamplerConfig s;
    s.kind = SamplerKind::langevin;
    s.tau = 0.08;
    s.n_samples = 12000;
    s.burn_in = 2000;
    s.seed = mix_seed(505, static_cast<std::uint64_t>(c));
    s.init_fill = fills[c];
    cfgs.push_back(s);
  }
  const auto recs = run_chains(target, cfgs);
  const DiagnosticsReport d = diagnostics(recs, 2000);
  double mean_err = 0.0, var_err = 0.0;
  for (int j = 0; j < 5; ++j) {
    mean_err = std::max(mean_err, std::abs(d.mean[j]));
    var_err = std::max(var_err, std::abs(d.stddev[j] * d.stddev[j] - 1.0));
  }
  const double rhat = d.rhat.maxCoeff();
  verdict("5", mean_err <= 0.05 && var_err <= 0.1 && rhat <= 1.05,
          fmt("tau=0.08, 3 chains x 1e4 post-burn-in: max |mean| %.4f (tol 0.05), max |var-1| %.4f (tol 0.1), "
              "max R-hat %.4f (tol 1.05)",
              mean_err, var_err, rhat));
}

// 6. Pre-image reconstruction error over polynomial degree, at the common
// retained dimension r = 20.
void criterion_6() {
  ChannelSpec spec;
  const Eigen::MatrixXd Y = generate_snapshots(build_structured_mesh(16, 16, 1.0, 1.0), spec, 200).Y;
  std::vector<double> err;
  std::string table;
  for (int d = 1; d <= 5; ++d) {
    const Kernel k = d == 1 ? Kernel::linear() : Kernel::polynomial(d);
    const FidelityRow row = preimage_fidelity(Y, k, DimensionSelection::fixed(20), PreimageOptions{}, 200);
    err.push_back(row.mean_error);
    table += fmt("%sd=%d %.4f", d > 1 ? ", " : "", d, row.mean_error);
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < err.size(); ++i) decreasing = decreasing && err[i] < err[i - 1];
  verdict("6", decreasing, "16x16, 200 snapshots, r=20, mean relative error: " + table + " (must decrease)");
}

// 7. Inversion through the CLI stages.
void criterion_7(const fs::path& config_path, bool full) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig config = load_config(config_path);
  const fs::path out = fs::temp_directory_path() / (full ? "stochinv_acceptance_full" : "stochinv_acceptance_smoke");
  fs::remove_all(out);
  StageOptions opts;
  opts.out = out;
  cmd_generate(config, opts);
  cmd_fit(config, opts);
  cmd_synth_obs(config, opts);
  const InvertSummary s = cmd_invert(config, opts);
  const double elapsed = seconds_since(t0);

  const RunSummary* lm = s.find("kpca_langevin");
  const RunSummary* rw = s.find("kpca_random_walk");
  const RunSummary* pca = s.find("pca_langevin");
  if (!lm || !rw || !pca) {
    verdict(full ? "7" : "7 (smoke)", false, "config lacks the kpca_langevin / kpca_random_walk / pca_langevin runs");
    return;
  }
  const bool a = lm->agreement_iteration < rw->agreement_iteration;
  const bool b = lm->distance_to_projected_truth < s.prior_distance_to_projected_truth;
  const bool c = lm->mean_acceptance > pca->mean_acceptance && std::abs(lm->mean_acceptance - 0.3366) <= 0.15 &&
                 std::abs(pca->mean_acceptance - 0.1010) <= 0.15;
  const std::string id = full ? "7" : "7 (smoke)";
  const std::string scale = fmt("%dx%d, M=%d, %d samples, %.0f s", config.mesh.nx, config.mesh.ny,
                                config.realizations, config.sampling.n_samples, elapsed);
  verdict((id + "a").c_str(), a,
          fmt("%s: first agreement LMCMC %d vs MHMCMC %d of %d (LMCMC must be earlier)", scale.c_str(),
              lm->agreement_iteration, rw->agreement_iteration, s.n_samples));
  verdict((id + "b").c_str(), b,
          fmt("L2 distance to projected truth: posterior mean %.3f vs prior mean %.3f", lm->distance_to_projected_truth,
              s.prior_distance_to_projected_truth));
  if (full) {
    verdict((id + "c").c_str(), c,
            fmt("acceptance KPCA-LMCMC %.4f vs PCA-LMCMC %.4f (ordering; within 0.15 of 0.3366 / 0.1010)",
                lm->mean_acceptance, pca->mean_acceptance));
  } else {
    verdict((id + " runtime").c_str(), elapsed < 300.0, fmt("%.1f s (limit 300 s)", elapsed));
    std::printf("[INFO] criterion 7 (smoke) acceptance: KPCA-LMCMC %.4f, MHMCMC %.4f, PCA-LMCMC %.4f\n",
                lm->mean_acceptance, rw->mean_acceptance, pca->mean_acceptance);
  }
}

// 8. Energy-based dimension selection on the generated ensemble.
void criterion_8() {
  const KpcaModel model = KpcaModel::fit(reference_ensemble(), Kernel::polynomial(5), DimensionSelection::energy(0.75));
  verdict("8", model.dimension() >= 15 && model.dimension() <= 30,
          fmt("energy_fraction 0.75, d=5, M=1000: r = %d (band [15, 30])", model.dimension()));
}

}  // namespace

int main(int argc, char** argv) {
  bool full = false;
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--full") == 0) full = true;
    else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  const fs::path configs = STOCHINV_CONFIG_DIR;
  auto run = [&](int id, const std::function<void()>& body) {
    if (only && only != id) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      verdict(std::to_string(id).c_str(), false, std::string("threw: ") + e.what());
    }
    std::printf("       (%.1f s)\n", seconds_since(t0));
  };
  if (full) {
    run(7, [&] { criterion_7(configs / "full.json", true); });
  } else {
    run(1, criterion_1);
    run(2, criterion_2);
    run(3, criterion_3);
    run(4, criterion_4);
    run(5, criterion_5);
    run(6, criterion_6);
    run(7, [&] { criterion_7(configs / "smoke.json", false); });
    run(8, criterion_8);
  }
  std::printf("%d criterion check(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
