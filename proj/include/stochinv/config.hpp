#pragma once

// Experiment configuration: one JSON document drives every CLI stage.

#include "stochinv/kpca.hpp"
#include "stochinv/mcmc.hpp"
#include "stochinv/mesh_fem.hpp"
#include "stochinv/pce.hpp"
#include "stochinv/prior_gen.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stochinv {

struct MeshConfig {
  int nx = 31;
  int ny = 31;
  double width = 1.0;
  double height = 1.0;
};

struct ReductionConfig {
  Kernel kernel = Kernel::polynomial(5);
  DimensionSelection selection = DimensionSelection::fixed(20);
};

struct ObservationConfig {
  std::vector<Boundary> boundaries = {Boundary::top, Boundary::left, Boundary::right};
  double noise_std = 0.0;  // synthetic noise added to the observations
  std::uint64_t seed = 7;
};

struct LikelihoodConfig {
  // sigma = noise_std when given, else noise_std_relative * max |u_obs|.
  std::optional<double> noise_std;
  double noise_std_relative = 30.0;
  double scale = 1000.0;
};

struct SamplingRun {
  std::string name;
  std::string model = "kpca";  // kpca | pca
  SamplerKind sampler = SamplerKind::langevin;
};

struct SamplingConfig {
  std::uint64_t seed = 11;
  int n_samples = 2000;
  std::optional<int> burn_in;
  double tau = 0.08;
  double rw_std = 0.1;
  std::vector<double> init_fills = {-2.0, 0.0, 2.0};
  std::vector<SamplingRun> runs;
  int histogram_bins = 40;
};

struct ReportConfig {
  std::vector<int> fidelity_degrees = {1, 2, 3, 4, 5};
  int fidelity_snapshots = 200;
  std::optional<int> fidelity_dimension;  // defaults to the fitted r
  std::optional<double> fidelity_energy;  // second table with energy-selected r
};

struct ExperimentConfig {
  MeshConfig mesh;
  ChannelSpec prior;
  int realizations = 1000;
  int truth_index = 0;
  double rho_g = 0.1;
  ReductionConfig reduction;
  PceOptions pce;
  ObservationConfig observations;
  LikelihoodConfig likelihood;
  PreimageOptions preimage;
  SamplingConfig sampling;
  ReportConfig report;

  void validate() const;
  Mesh build_mesh() const;
  LoadSpec load() const;
};

/// Full-scale defaults with the three standard runs (kpca/langevin,
/// kpca/random_walk, pca/langevin).
ExperimentConfig default_config();

/// Fields absent from the document keep their defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& config);

}  // namespace stochinv
