#pragma once

// CLI stages. Each stage reads the artifacts of earlier stages from the
// output directory and writes its own; nothing is shared in memory.
//
// Layout of the output directory:
//   snapshots.txt, snapshots.json               generate
//   kpca.bin, pce.txt, pca.bin, pca_pce.txt     fit
//   fit.json
//   observations.txt, truth.txt, observations.json   synth-obs
//   chains/<run>_chain<c>.txt                   invert
//   <run>_posterior_mean.txt, <run>_posterior_std.txt, <run>_histogram.txt
//   prior_mean.txt, truth_projected.txt, invert.json
//   eigenvalues.txt, preimage_fidelity.txt, diagnostics.txt, report.json   report

#include "stochinv/config.hpp"
#include "stochinv/mcmc.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stochinv {

struct StageOptions {
  std::filesystem::path out = ".";
  std::optional<std::uint64_t> seed;  // overrides the seed of the stage being run
  std::optional<int> chains;          // chain count; starts spread evenly over [-2, 2]
  bool quiet = true;
};

struct FitSummary {
  int dimension = 0;
  double energy = 0.0;  // retained share of the positive spectrum
  std::vector<int> non_monotone;
  std::vector<int> pca_non_monotone;
};

struct ObservationSummary {
  int count = 0;
  double max_abs = 0.0;
  double noise_std = 0.0;
};

struct RunSummary {
  std::string name;
  std::string model;
  SamplerKind sampler = SamplerKind::langevin;
  std::vector<double> acceptance_rates;
  double mean_acceptance = 0.0;
  int agreement_iteration = 0;
  double max_rhat = 0.0;
  int proposal_failures = 0;
  std::vector<std::string> chain_errors;
  double distance_to_projected_truth = 0.0;
  double distance_to_truth = 0.0;
};

struct InvertSummary {
  double noise_std = 0.0;
  int burn_in = 0;
  int n_samples = 0;
  double prior_distance_to_projected_truth = 0.0;
  std::vector<RunSummary> runs;

  const RunSummary* find(const std::string& name) const;
};

struct FidelityRow {
  int degree = 0;
  int dimension = 0;
  double mean_error = 0.0;
  double max_error = 0.0;
  int converged = 0;
};

struct ReportSummary {
  std::vector<FidelityRow> fidelity;
  std::vector<FidelityRow> fidelity_energy;
  std::vector<std::string> runs;
};

void cmd_generate(const ExperimentConfig& config, const StageOptions& opts);
FitSummary cmd_fit(const ExperimentConfig& config, const StageOptions& opts);
ObservationSummary cmd_synth_obs(const ExperimentConfig& config, const StageOptions& opts);
InvertSummary cmd_invert(const ExperimentConfig& config, const StageOptions& opts);
ReportSummary cmd_report(const ExperimentConfig& config, const StageOptions& opts);

/// Mean relative pre-image error ||y~ - y|| / ||y|| over the first `count`
/// snapshots, reconstructing each from its own training coordinates.
FidelityRow preimage_fidelity(const Eigen::MatrixXd& Y, const Kernel& kernel, const DimensionSelection& selection,
                              const PreimageOptions& options, int count);

/// Initial fills for n chains, evenly spaced on [-2, 2] (0 for one chain).
std::vector<double> chain_fills(int n);

}  // namespace stochinv
