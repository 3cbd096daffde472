#include "stochinv/experiment.hpp"

#include "stochinv/error.hpp"
#include "stochinv/io.hpp"
#include "stochinv/posterior.hpp"
#include "stochinv/prior_gen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <random>

namespace stochinv {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class F>
auto staged(const char* stage, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void log(const StageOptions& o, const std::string& msg) {
  if (!o.quiet) std::cerr << msg << "\n";
}

fs::path require(const fs::path& p, const char* produced_by) {
  if (!fs::exists(p)) throw FormatError("missing " + p.string() + " (run '" + produced_by + "' first)");
  return p;
}

SnapshotSet load_snapshots(const ExperimentConfig& c, const fs::path& out) {
  SnapshotSet set;
  set.Y = read_matrix(require(out / "snapshots.txt", "generate"));
  const Mesh mesh = c.build_mesh();
  if (set.Y.rows() != mesh.node_count()) {
    throw InvalidArgument("snapshots have " + std::to_string(set.Y.rows()) + " rows but the mesh has " +
                          std::to_string(mesh.node_count()) + " nodes");
  }
  set.mesh = MeshIdentity::of(mesh);
  set.spec = c.prior;
  if (c.truth_index >= set.Y.cols()) throw InvalidArgument("truth_index exceeds the snapshot count");
  return set;
}

double noise_std(const ExperimentConfig& c, const ObservationSet& obs) {
  if (c.likelihood.noise_std) return *c.likelihood.noise_std;
  const double mx = obs.values.cwiseAbs().maxCoeff();
  if (!(mx > 0)) throw InvalidArgument("observations are all zero; give likelihood.noise_std explicitly");
  return c.likelihood.noise_std_relative * mx;
}

void write_chain(const fs::path& path, const ChainRecord& rec) {
  Eigen::MatrixXd M(rec.size(), rec.samples.cols() + 3);
  for (int k = 0; k < rec.size(); ++k) {
    M(k, 0) = k;
    M(k, 1) = rec.accepted[static_cast<std::size_t>(k)];
    M(k, 2) = rec.log_posts[k];
    M.row(k).tail(rec.samples.cols()) = rec.samples.row(k);
  }
  std::string header = "sampler " + to_string(rec.kind) + " seed " + std::to_string(rec.seed) + "\n" +
                       "iteration accepted log_post eta_1..eta_r";
  if (!rec.ok()) header += "\nerror " + rec.error;
  write_matrix(path, M, header);
}

ChainRecord read_chain(const fs::path& path) {
  const std::string text = read_text(path);
  ChainRecord rec;
  if (text.rfind("# sampler ", 0) == 0) {
    const auto end = text.find(' ', 10);
    rec.kind = sampler_kind_from_string(text.substr(10, end - 10));
  }
  if (auto pos = text.find("\n# error "); pos != std::string::npos) {
    rec.error = text.substr(pos + 9, text.find('\n', pos + 1) - pos - 9);
  }
  Eigen::MatrixXd M = read_matrix(path);
  if (M.rows() == 0 || M.cols() < 4) throw FormatError(path.string() + ": not a chain table");
  rec.samples = M.rightCols(M.cols() - 3);
  rec.log_posts = M.col(2);
  rec.accepted.resize(static_cast<std::size_t>(M.rows()));
  for (Eigen::Index k = 0; k < M.rows(); ++k) rec.accepted[static_cast<std::size_t>(k)] = M(k, 1) != 0.0;
  rec.acceptance_rate = M.col(1).mean();
  return rec;
}

// Pooled post-burn-in marginal densities; column 0 holds bin centres.
Eigen::MatrixXd histograms(const std::vector<ChainRecord>& recs, int burn_in, int bins) {
  const Eigen::Index r = recs.front().samples.cols();
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& rec : recs) {
    if (rec.size() <= burn_in) continue;
    lo = std::min(lo, rec.samples.bottomRows(rec.size() - burn_in).minCoeff());
    hi = std::max(hi, rec.samples.bottomRows(rec.size() - burn_in).maxCoeff());
  }
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 0.5 : -0.5;
    hi = lo + 1.0;
  }
  const double width = (hi - lo) / bins;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(bins, r + 1);
  for (int b = 0; b < bins; ++b) H(b, 0) = lo + (b + 0.5) * width;
  double count = 0;
  for (const auto& rec : recs) {
    for (int k = burn_in; k < rec.size(); ++k) {
      for (Eigen::Index j = 0; j < r; ++j) {
        const int b = std::clamp(static_cast<int>((rec.samples(k, j) - lo) / width), 0, bins - 1);
        H(b, j + 1) += 1.0;
      }
      count += 1.0;
    }
  }
  if (count > 0) H.rightCols(r) /= count * width;
  return H;
}

json report_json(const DiagnosticsReport& d) {
  return {{"burn_in", d.burn_in},
          {"acceptance_rates", d.acceptance_rates},
          {"agreement_iteration", d.agreement_iteration},
          {"agreement_tolerance", d.agreement_tolerance},
          {"rhat", std::vector<double>(d.rhat.data(), d.rhat.data() + d.rhat.size())},
          {"mean", std::vector<double>(d.mean.data(), d.mean.data() + d.mean.size())},
          {"stddev", std::vector<double>(d.stddev.data(), d.stddev.data() + d.stddev.size())}};
}

}  // namespace

const RunSummary* InvertSummary::find(const std::string& name) const {
  for (const auto& r : runs)
    if (r.name == name) return &r;
  return nullptr;
}

std::vector<double> chain_fills(int n) {
  if (n < 1) throw InvalidArgument("chain count must be positive");
  if (n == 1) return {0.0};
  std::vector<double> f(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) f[static_cast<std::size_t>(c)] = -2.0 + 4.0 * c / (n - 1);
  return f;
}

void cmd_generate(const ExperimentConfig& config, const StageOptions& opts) {
  staged("generate", [&] {
    config.validate();
    ChannelSpec spec = config.prior;
    if (opts.seed) spec.seed = *opts.seed;
    const Mesh mesh = config.build_mesh();
    SnapshotSet set = generate_snapshots(mesh, spec, config.realizations);
    write_matrix(opts.out / "snapshots.txt", set.Y,
                 "snapshots: rows are mesh nodes, columns are realizations of ln(lambda)");
    ExperimentConfig used = config;
    used.prior.seed = spec.seed;
    json meta = json::parse(dump_config(used));
    json m = {{"nodes", set.node_count()}, {"realizations", set.realizations()},
              {"mesh", meta["mesh"]},     {"prior", meta["prior"]}};
    write_text(opts.out / "snapshots.json", m.dump(2) + "\n");
    log(opts, "generate: " + std::to_string(set.realizations()) + " realizations on " +
                  std::to_string(set.node_count()) + " nodes");
    return 0;
  });
}

FitSummary cmd_fit(const ExperimentConfig& config, const StageOptions& opts) {
  return staged("fit", [&] {
    config.validate();
    const SnapshotSet set = load_snapshots(config, opts.out);
    const HoldOut ho = hold_out(set, config.truth_index);
    const KpcaModel kpca = KpcaModel::fit(ho.rest.Y, config.reduction.kernel, config.reduction.selection);
    const PceModel pce = fit_pce(kpca.training_coordinates(), config.pce);
    // Linear-kernel baseline with the same retained dimension.
    const KpcaModel pca = KpcaModel::fit(ho.rest.Y, Kernel::linear(), DimensionSelection::fixed(kpca.dimension()));
    const PceModel pca_pce = fit_pce(pca.training_coordinates(), config.pce);

    save_kpca(opts.out / "kpca.bin", kpca);
    save_pce(opts.out / "pce.txt", pce);
    save_kpca(opts.out / "pca.bin", pca);
    save_pce(opts.out / "pca_pce.txt", pca_pce);

    FitSummary s;
    s.dimension = kpca.dimension();
    s.energy = kpca.eigenvalues().head(s.dimension).sum() / kpca.eigenvalues().sum();
    s.non_monotone = monotonicity_violations(pce);
    s.pca_non_monotone = monotonicity_violations(pca_pce);
    json j = {{"kernel", config.reduction.kernel.describe()},
              {"training_snapshots", kpca.realizations()},
              {"dimension", s.dimension},
              {"energy", s.energy},
              {"pca_energy", pca.eigenvalues().head(s.dimension).sum() / pca.eigenvalues().sum()},
              {"pce_order", pce.order},
              {"non_monotone_components", s.non_monotone},
              {"pca_non_monotone_components", s.pca_non_monotone}};
    write_text(opts.out / "fit.json", j.dump(2) + "\n");
    log(opts, "fit: r = " + std::to_string(s.dimension) + ", " + std::to_string(s.non_monotone.size()) +
                  " PCE components not monotone on [-4, 4]");
    return s;
  });
}

ObservationSummary cmd_synth_obs(const ExperimentConfig& config, const StageOptions& opts) {
  return staged("synth-obs", [&] {
    config.validate();
    const SnapshotSet set = load_snapshots(config, opts.out);
    const Eigen::VectorXd truth = set.Y.col(config.truth_index);
    const Mesh mesh = config.build_mesh();
    const SolveResult fwd = solve_forward(assemble_system(mesh, MaterialField::from_log_lambda(truth), config.load()));
    ObservationSet obs = observe_nodes(boundary_nodes(mesh, config.observations.boundaries), fwd.u, fwd.constrained);

    const std::uint64_t seed = opts.seed ? *opts.seed : config.observations.seed;
    if (config.observations.noise_std > 0) {
      std::mt19937_64 rng(mix_seed(seed, 0));
      std::normal_distribution<double> normal(0.0, config.observations.noise_std);
      for (Eigen::Index i = 0; i < obs.values.size(); ++i) obs.values(i) += normal(rng);
    }
    save_observations(opts.out / "observations.txt", obs);
    write_vector(opts.out / "truth.txt", truth, "held-out ln(lambda), realization " + std::to_string(config.truth_index));

    ObservationSummary s;
    s.count = obs.size();
    s.max_abs = obs.values.cwiseAbs().maxCoeff();
    s.noise_std = config.observations.noise_std;
    json j = {{"observed_dofs", s.count}, {"max_abs", s.max_abs}, {"noise_std", s.noise_std},
              {"seed", seed},             {"truth_index", config.truth_index}};
    write_text(opts.out / "observations.json", j.dump(2) + "\n");
    log(opts, "synth-obs: " + std::to_string(s.count) + " observed dofs");
    return s;
  });
}

InvertSummary cmd_invert(const ExperimentConfig& config, const StageOptions& opts) {
  return staged("invert", [&] {
    config.validate();
    if (config.sampling.runs.empty()) throw InvalidArgument("no sampling runs configured");
    const ObservationSet obs = load_observations(require(opts.out / "observations.txt", "synth-obs"));
    const Eigen::VectorXd truth = read_vector(require(opts.out / "truth.txt", "synth-obs"));

    std::map<std::string, std::shared_ptr<const PosteriorSpec>> specs;
    InvertSummary summary;
    summary.noise_std = noise_std(config, obs);
    auto spec_for = [&](const std::string& model) {
      if (auto it = specs.find(model); it != specs.end()) return it->second;
      const std::string prefix = model == "kpca" ? "" : "pca_";
      auto spec = std::make_shared<PosteriorSpec>();
      spec->kpca = std::make_shared<KpcaModel>(load_kpca(require(opts.out / (model + ".bin"), "fit")));
      spec->pce = std::make_shared<PceModel>(load_pce(require(opts.out / (prefix + "pce.txt"), "fit")));
      spec->mesh = config.build_mesh();
      spec->load = config.load();
      spec->obs = obs;
      spec->noise_variance = summary.noise_std * summary.noise_std;
      spec->likelihood_scale = config.likelihood.scale;
      spec->preimage = config.preimage;
      spec->validate();
      if (spec->kpca->node_count() != truth.size()) throw InvalidArgument("truth and model sizes differ");
      specs[model] = spec;
      return std::shared_ptr<const PosteriorSpec>(spec);
    };

    const auto kspec = spec_for("kpca");
    const KpcaModel& kpca = *kspec->kpca;
    const Eigen::VectorXd prior_mean = kpca.snapshot_mean();
    const Eigen::VectorXd projected = preimage(kpca, kpca.project(truth), nullptr, config.preimage).y;
    write_vector(opts.out / "prior_mean.txt", prior_mean, "ensemble mean of ln(lambda)");
    write_vector(opts.out / "truth_projected.txt", projected, "pre-image of the projected truth");
    summary.prior_distance_to_projected_truth = (prior_mean - projected).norm();

    const std::vector<double> fills = opts.chains ? chain_fills(*opts.chains) : config.sampling.init_fills;
    const std::uint64_t seed = opts.seed ? *opts.seed : config.sampling.seed;
    summary.n_samples = config.sampling.n_samples;
    summary.burn_in = config.sampling.burn_in ? *config.sampling.burn_in : config.sampling.n_samples / 5;
    fs::create_directories(opts.out / "chains");

    json runs_json = json::array();
    for (std::size_t ri = 0; ri < config.sampling.runs.size(); ++ri) {
      const SamplingRun& run = config.sampling.runs[ri];
      const auto spec = spec_for(run.model);
      PosteriorDensity density(spec);
      std::vector<SamplerConfig> cfgs;
      for (std::size_t c = 0; c < fills.size(); ++c) {
        SamplerConfig sc;
        sc.kind = run.sampler;
        sc.tau = config.sampling.tau;
        sc.rw_std = config.sampling.rw_std;
        sc.n_samples = config.sampling.n_samples;
        sc.burn_in = summary.burn_in;
        sc.seed = mix_seed(seed, ri * 1024 + c);
        sc.init_fill = fills[c];
        cfgs.push_back(sc);
      }

      // Per-chain field moments, combined in chain order so results do not
      // depend on thread scheduling.
      const Eigen::Index nr = spec->kpca->node_count();
      std::vector<Eigen::VectorXd> sum(fills.size(), Eigen::VectorXd::Zero(nr));
      std::vector<Eigen::VectorXd> sq(fills.size(), Eigen::VectorXd::Zero(nr));
      std::vector<double> count(fills.size(), 0.0);
      const int burn = summary.burn_in;
      auto observer = [&](int chain, int iter, const ChainState& st, bool) {
        if (iter < burn) return;
        const PosteriorEval* d = PosteriorDensity::details(st.eval);
        if (!d || d->y.size() != nr) return;
        auto c = static_cast<std::size_t>(chain);
        sum[c] += d->y;
        sq[c] += d->y.cwiseAbs2();
        count[c] += 1.0;
      };
      log(opts, "invert: " + run.name + " (" + std::to_string(fills.size()) + " chains x " +
                    std::to_string(config.sampling.n_samples) + ")");
      const std::vector<ChainRecord> recs = run_chains(density, cfgs, observer);
      // Drop tables left by an earlier run with more chains.
      for (const auto& e : fs::directory_iterator(opts.out / "chains")) {
        if (e.path().filename().string().rfind(run.name + "_chain", 0) == 0) fs::remove(e.path());
      }

      RunSummary rs;
      rs.name = run.name;
      rs.model = run.model;
      rs.sampler = run.sampler;
      std::vector<ChainRecord> good;
      for (std::size_t c = 0; c < recs.size(); ++c) {
        write_chain(opts.out / "chains" / (run.name + "_chain" + std::to_string(c) + ".txt"), recs[c]);
        rs.acceptance_rates.push_back(recs[c].acceptance_rate);
        rs.proposal_failures += recs[c].proposal_failures;
        if (recs[c].ok()) good.push_back(recs[c]);
        else rs.chain_errors.push_back("chain " + std::to_string(c) + ": " + recs[c].error);
      }
      if (good.empty()) throw NumericalError("every chain of run " + run.name + " failed: " + rs.chain_errors.front());
      rs.mean_acceptance = 0.0;
      for (double a : rs.acceptance_rates) rs.mean_acceptance += a / static_cast<double>(rs.acceptance_rates.size());

      json rj = {{"name", rs.name}, {"model", rs.model}, {"sampler", to_string(rs.sampler)},
                 {"acceptance_rates", rs.acceptance_rates}, {"mean_acceptance", rs.mean_acceptance},
                 {"proposal_failures", rs.proposal_failures}, {"chain_errors", rs.chain_errors}};
      if (good.size() >= 2 && good.front().size() - burn >= 2) {
        const DiagnosticsReport d = diagnostics(good, burn);
        rs.agreement_iteration = d.agreement_iteration;
        rs.max_rhat = d.rhat.maxCoeff();
        rj["diagnostics"] = report_json(d);
      } else {
        rs.agreement_iteration = config.sampling.n_samples;
        rs.max_rhat = std::numeric_limits<double>::quiet_NaN();
      }
      write_matrix(opts.out / (run.name + "_histogram.txt"), histograms(good, burn, config.sampling.histogram_bins),
                   "bin_centre density_eta_1..density_eta_r (pooled after burn-in)");

      Eigen::VectorXd total = Eigen::VectorXd::Zero(nr), total_sq = Eigen::VectorXd::Zero(nr);
      double n = 0.0;
      for (std::size_t c = 0; c < fills.size(); ++c) {
        if (!recs[c].ok()) continue;
        total += sum[c];
        total_sq += sq[c];
        n += count[c];
      }
      if (n > 0) {
        const Eigen::VectorXd mean = total / n;
        const Eigen::VectorXd var = (total_sq / n - mean.cwiseAbs2()).cwiseMax(0.0) * (n > 1 ? n / (n - 1) : 1.0);
        write_vector(opts.out / (run.name + "_posterior_mean.txt"), mean, "posterior mean of ln(lambda)");
        write_vector(opts.out / (run.name + "_posterior_std.txt"), var.cwiseSqrt(), "posterior std of ln(lambda)");
        rs.distance_to_projected_truth = (mean - projected).norm();
        rs.distance_to_truth = (mean - truth).norm();
      } else {
        rs.distance_to_projected_truth = rs.distance_to_truth = std::numeric_limits<double>::quiet_NaN();
      }
      rj["agreement_iteration"] = rs.agreement_iteration;
      rj["max_rhat"] = rs.max_rhat;
      rj["distance_to_projected_truth"] = rs.distance_to_projected_truth;
      rj["distance_to_truth"] = rs.distance_to_truth;
      runs_json.push_back(rj);
      summary.runs.push_back(rs);
      char line[256];
      std::snprintf(line, sizeof line, "invert: %s acceptance %.3f agreement %d max R-hat %.3f", rs.name.c_str(),
                    rs.mean_acceptance, rs.agreement_iteration, rs.max_rhat);
      log(opts, line);
    }

    json j = {{"noise_std", summary.noise_std},
              {"likelihood_scale", config.likelihood.scale},
              {"n_samples", summary.n_samples},
              {"burn_in", summary.burn_in},
              {"seed", seed},
              {"init_fills", fills},
              {"prior_distance_to_projected_truth", summary.prior_distance_to_projected_truth},
              {"truth_projection_error", (projected - truth).norm()},
              {"runs", runs_json}};
    write_text(opts.out / "invert.json", j.dump(2) + "\n");
    return summary;
  });
}

FidelityRow preimage_fidelity(const Eigen::MatrixXd& Y, const Kernel& kernel, const DimensionSelection& selection,
                              const PreimageOptions& options, int count) {
  if (count < 2 || count > Y.cols()) throw InvalidArgument("fidelity snapshot count outside [2, M]");
  const Eigen::MatrixXd Ys = Y.leftCols(count);
  const KpcaModel model = KpcaModel::fit(Ys, kernel, selection);
  FidelityRow row;
  row.degree = kernel.polynomial_degree();
  row.dimension = model.dimension();
  for (int l = 0; l < count; ++l) {
    const PreimageResult res = preimage(model, model.training_coordinates().row(l).transpose(), nullptr, options);
    const double e = (res.y - Ys.col(l)).norm() / Ys.col(l).norm();
    row.mean_error += e / count;
    row.max_error = std::max(row.max_error, e);
    row.converged += res.converged ? 1 : 0;
  }
  return row;
}

ReportSummary cmd_report(const ExperimentConfig& config, const StageOptions& opts) {
  return staged("report", [&] {
    config.validate();
    const fs::path chain_dir = opts.out / "chains";
    std::map<std::string, std::vector<fs::path>> groups;
    if (fs::is_directory(chain_dir)) {
      for (const auto& e : fs::directory_iterator(chain_dir)) {
        const std::string name = e.path().filename().string();
        const auto pos = name.rfind("_chain");
        if (pos == std::string::npos || e.path().extension() != ".txt") continue;
        groups[name.substr(0, pos)].push_back(e.path());
      }
    }
    if (groups.empty()) throw FormatError("no chain files in " + chain_dir.string() + " (run 'invert' first)");

    ReportSummary s;
    const KpcaModel kpca = load_kpca(require(opts.out / "kpca.bin", "fit"));
    const KpcaModel pca = load_kpca(require(opts.out / "pca.bin", "fit"));
    const int r = kpca.dimension();
    Eigen::MatrixXd ev(r, 5);
    const double ktot = kpca.eigenvalues().sum(), ptot = pca.eigenvalues().sum();
    double kc = 0, pc = 0;
    for (int k = 0; k < r; ++k) {
      kc += kpca.eigenvalues()(k);
      pc += k < pca.eigenvalues().size() ? pca.eigenvalues()(k) : 0.0;
      ev(k, 0) = k + 1;
      ev(k, 1) = kpca.eigenvalues()(k);
      ev(k, 2) = kc / ktot;
      ev(k, 3) = k < pca.eigenvalues().size() ? pca.eigenvalues()(k) : 0.0;
      ev(k, 4) = pc / ptot;
    }
    write_matrix(opts.out / "eigenvalues.txt", ev,
                 "index kpca_eigenvalue kpca_cumulative_share pca_eigenvalue pca_cumulative_share");

    const SnapshotSet set = load_snapshots(config, opts.out);
    const HoldOut ho = hold_out(set, config.truth_index);
    const int count = std::min<int>(config.report.fidelity_snapshots, static_cast<int>(ho.rest.Y.cols()));
    const int fr = config.report.fidelity_dimension ? *config.report.fidelity_dimension : r;
    auto table = [&](const DimensionSelection& sel, const fs::path& path, const std::string& label) {
      std::vector<FidelityRow> rows;
      Eigen::MatrixXd M(static_cast<Eigen::Index>(config.report.fidelity_degrees.size()), 5);
      for (std::size_t i = 0; i < config.report.fidelity_degrees.size(); ++i) {
        const int d = config.report.fidelity_degrees[i];
        const Kernel k = d == 1 ? Kernel::linear() : Kernel::polynomial(d);
        rows.push_back(preimage_fidelity(ho.rest.Y, k, sel, config.preimage, count));
        const auto& fr_ = rows.back();
        M.row(static_cast<Eigen::Index>(i)) << d, fr_.dimension, fr_.mean_error, fr_.max_error, fr_.converged;
      }
      write_matrix(path, M, label + "\ndegree dimension mean_relative_error max_relative_error converged");
      return rows;
    };
    s.fidelity = table(DimensionSelection::fixed(fr), opts.out / "preimage_fidelity.txt",
                       "pre-image reconstruction of " + std::to_string(count) + " snapshots, fixed dimension");
    if (config.report.fidelity_energy) {
      s.fidelity_energy = table(DimensionSelection::energy(*config.report.fidelity_energy),
                                opts.out / "preimage_fidelity_energy.txt",
                                "pre-image reconstruction of " + std::to_string(count) + " snapshots, energy-selected dimension");
    }

    json runs = json::object();
    std::string diag = "# run component rhat mean stddev\n";
    for (auto& [name, files] : groups) {
      std::sort(files.begin(), files.end());
      std::vector<ChainRecord> recs;
      std::vector<double> rates;
      for (const auto& f : files) {
        ChainRecord rec = read_chain(f);
        rates.push_back(rec.acceptance_rate);
        if (rec.ok()) recs.push_back(std::move(rec));
      }
      json rj = {{"chains", files.size()}, {"acceptance_rates", rates}};
      if (recs.size() >= 2) {
        const DiagnosticsReport d = diagnostics(recs, config.sampling.burn_in);
        rj["diagnostics"] = report_json(d);
        for (Eigen::Index j = 0; j < d.rhat.size(); ++j) {
          char line[160];
          std::snprintf(line, sizeof line, "%s %d %.6g %.6g %.6g\n", name.c_str(), static_cast<int>(j + 1), d.rhat[j],
                        d.mean[j], d.stddev[j]);
          diag += line;
        }
      }
      runs[name] = rj;
      s.runs.push_back(name);
    }
    write_text(opts.out / "diagnostics.txt", diag);
    json fid = json::array();
    for (const auto& f : s.fidelity)
      fid.push_back({{"degree", f.degree}, {"dimension", f.dimension}, {"mean_error", f.mean_error}});
    json j = {{"dimension", r}, {"preimage_fidelity", fid}, {"runs", runs}};
    write_text(opts.out / "report.json", j.dump(2) + "\n");
    log(opts, "report: " + std::to_string(s.runs.size()) + " runs summarised");
    return s;
  });
}

}  // namespace stochinv
