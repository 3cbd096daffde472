#include "stochinv/config.hpp"

#include "stochinv/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace stochinv {

using nlohmann::json;

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key)) {
    if (j.at(key).is_null()) out.reset();
    else out = j.at(key).get<T>();
  }
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  const json& s = root.at(key);
  if (!s.is_object()) throw InvalidArgument(std::string("config section '") + key + "' must be an object");
  return s;
}

Kernel parse_kernel(const json& j, Kernel fallback) {
  std::string kind(to_string(fallback.kind));
  read(j, "kernel", kind);
  switch (kernel_kind_from_string(kind)) {
    case KernelKind::linear:
      return Kernel::linear();
    case KernelKind::polynomial: {
      int degree = fallback.kind == KernelKind::polynomial ? fallback.degree : 2;
      double offset = fallback.kind == KernelKind::polynomial ? fallback.offset : 0.0;
      read(j, "degree", degree);
      read(j, "offset", offset);
      return Kernel::polynomial(degree, offset);
    }
    case KernelKind::gaussian: {
      double sigma = fallback.kind == KernelKind::gaussian ? fallback.sigma : 1.0;
      read(j, "sigma", sigma);
      return Kernel::gaussian(sigma);
    }
  }
  throw InvalidArgument("unknown kernel " + kind);
}

json kernel_json(const Kernel& k) {
  json j;
  j["kernel"] = std::string(to_string(k.kind));
  if (k.kind == KernelKind::polynomial) {
    j["degree"] = k.degree;
    j["offset"] = k.offset;
  } else if (k.kind == KernelKind::gaussian) {
    j["sigma"] = k.sigma;
  }
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (mesh.nx < 1 || mesh.ny < 1 || !(mesh.width > 0) || !(mesh.height > 0))
    throw InvalidArgument("mesh: nx, ny >= 1 and positive extents required");
  prior.validate();
  if (realizations < 1) throw InvalidArgument("prior: realizations must be positive");
  if (truth_index < 0 || truth_index >= realizations)
    throw InvalidArgument("truth_index out of range [0, realizations)");
  reduction.kernel.validate();
  const auto& sel = reduction.selection;
  if (sel.dimension.has_value() == sel.energy_fraction.has_value())
    throw InvalidArgument("reduction: give exactly one of dimension or energy_fraction");
  if (sel.dimension && *sel.dimension < 1) throw InvalidArgument("reduction: dimension must be positive");
  if (sel.energy_fraction && !(*sel.energy_fraction > 0 && *sel.energy_fraction < 1))
    throw InvalidArgument("reduction: energy_fraction must lie in (0, 1)");
  if (pce.order < 0) throw InvalidArgument("pce: order must be non-negative");
  if (pce.quadrature_points < 2 * pce.order + 1)
    throw InvalidArgument("pce: quadrature_points must be at least 2 * order + 1");
  if (observations.boundaries.empty()) throw InvalidArgument("observations: no boundaries selected");
  if (!(observations.noise_std >= 0)) throw InvalidArgument("observations: noise_std must be >= 0");
  if (likelihood.noise_std && !(*likelihood.noise_std > 0))
    throw InvalidArgument("likelihood: noise_std must be positive");
  if (!(likelihood.noise_std_relative > 0)) throw InvalidArgument("likelihood: noise_std_relative must be positive");
  if (!(likelihood.scale >= 1)) throw InvalidArgument("likelihood: scale must be >= 1");
  if (sampling.n_samples < 1) throw InvalidArgument("sampling: n_samples must be positive");
  if (sampling.init_fills.empty()) throw InvalidArgument("sampling: at least one chain is required");
  if (sampling.histogram_bins < 1) throw InvalidArgument("sampling: histogram_bins must be positive");
  for (const auto& run : sampling.runs) {
    if (run.name.empty()) throw InvalidArgument("sampling: run without a name");
    if (run.model != "kpca" && run.model != "pca")
      throw InvalidArgument("sampling: run '" + run.name + "' model must be kpca or pca");
  }
  for (std::size_t a = 0; a < sampling.runs.size(); ++a)
    for (std::size_t b = a + 1; b < sampling.runs.size(); ++b)
      if (sampling.runs[a].name == sampling.runs[b].name)
        throw InvalidArgument("sampling: duplicate run name " + sampling.runs[a].name);
  for (int d : report.fidelity_degrees)
    if (d < 1 || d > Kernel::kMaxDegree) throw InvalidArgument("report: fidelity degrees must lie in [1, 5]");
  if (report.fidelity_snapshots < 2) throw InvalidArgument("report: fidelity_snapshots must be >= 2");
}

Mesh ExperimentConfig::build_mesh() const { return build_structured_mesh(mesh.nx, mesh.ny, mesh.width, mesh.height); }

LoadSpec ExperimentConfig::load() const { return LoadSpec::self_weight(rho_g); }

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.sampling.runs = {{"kpca_langevin", "kpca", SamplerKind::langevin},
                     {"kpca_random_walk", "kpca", SamplerKind::random_walk},
                     {"pca_langevin", "pca", SamplerKind::langevin}};
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw FormatError("config: top level must be an object");

  ExperimentConfig c = default_config();
  try {
    const json& m = section(root, "mesh");
    read(m, "nx", c.mesh.nx);
    read(m, "ny", c.mesh.ny);
    read(m, "width", c.mesh.width);
    read(m, "height", c.mesh.height);

    const json& p = section(root, "prior");
    read(p, "realizations", c.realizations);
    read(p, "seed", c.prior.seed);
    read(p, "min_channels", c.prior.min_channels);
    read(p, "max_channels", c.prior.max_channels);
    read(p, "width_min", c.prior.width_min);
    read(p, "width_max", c.prior.width_max);
    read(p, "amplitude_min", c.prior.amplitude_min);
    read(p, "amplitude_max", c.prior.amplitude_max);
    read(p, "wavelength_min", c.prior.wavelength_min);
    read(p, "wavelength_max", c.prior.wavelength_max);
    read(p, "offset_min", c.prior.offset_min);
    read(p, "offset_max", c.prior.offset_max);
    read(p, "lambda_channel", c.prior.lambda_channel);
    read(p, "lambda_host", c.prior.lambda_host);

    read(root, "truth_index", c.truth_index);
    read(section(root, "load"), "rho_g", c.rho_g);

    const json& r = section(root, "reduction");
    c.reduction.kernel = parse_kernel(r, c.reduction.kernel);
    if (r.contains("energy_fraction")) {
      c.reduction.selection = DimensionSelection::energy(r.at("energy_fraction").get<double>());
    }
    if (r.contains("dimension")) {
      if (r.contains("energy_fraction")) throw InvalidArgument("reduction: dimension and energy_fraction both given");
      c.reduction.selection = DimensionSelection::fixed(r.at("dimension").get<int>());
    }

    const json& q = section(root, "pce");
    read(q, "order", c.pce.order);
    read(q, "quadrature_points", c.pce.quadrature_points);

    const json& o = section(root, "observations");
    if (o.contains("boundaries")) {
      c.observations.boundaries.clear();
      for (const auto& b : o.at("boundaries")) c.observations.boundaries.push_back(boundary_from_string(b.get<std::string>()));
    }
    read(o, "noise_std", c.observations.noise_std);
    read(o, "seed", c.observations.seed);

    const json& l = section(root, "likelihood");
    read(l, "noise_std", c.likelihood.noise_std);
    read(l, "noise_std_relative", c.likelihood.noise_std_relative);
    read(l, "scale", c.likelihood.scale);

    const json& pi = section(root, "preimage");
    read(pi, "tolerance", c.preimage.tolerance);
    read(pi, "max_iterations", c.preimage.max_iterations);
    read(pi, "max_restarts", c.preimage.max_restarts);

    const json& s = section(root, "sampling");
    read(s, "seed", c.sampling.seed);
    read(s, "n_samples", c.sampling.n_samples);
    read(s, "burn_in", c.sampling.burn_in);
    read(s, "tau", c.sampling.tau);
    read(s, "rw_std", c.sampling.rw_std);
    read(s, "init_fills", c.sampling.init_fills);
    read(s, "histogram_bins", c.sampling.histogram_bins);
    if (s.contains("runs")) {
      c.sampling.runs.clear();
      for (const auto& jr : s.at("runs")) {
        SamplingRun run;
        read(jr, "name", run.name);
        read(jr, "model", run.model);
        std::string sampler = to_string(run.sampler);
        read(jr, "sampler", sampler);
        run.sampler = sampler_kind_from_string(sampler);
        if (run.name.empty()) run.name = run.model + "_" + to_string(run.sampler);
        c.sampling.runs.push_back(run);
      }
    }

    const json& rep = section(root, "report");
    read(rep, "fidelity_degrees", c.report.fidelity_degrees);
    read(rep, "fidelity_snapshots", c.report.fidelity_snapshots);
    read(rep, "fidelity_dimension", c.report.fidelity_dimension);
    read(rep, "fidelity_energy", c.report.fidelity_energy);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  json root;
  root["mesh"] = {{"nx", c.mesh.nx}, {"ny", c.mesh.ny}, {"width", c.mesh.width}, {"height", c.mesh.height}};
  root["prior"] = {{"realizations", c.realizations},       {"seed", c.prior.seed},
                   {"min_channels", c.prior.min_channels}, {"max_channels", c.prior.max_channels},
                   {"width_min", c.prior.width_min},       {"width_max", c.prior.width_max},
                   {"amplitude_min", c.prior.amplitude_min}, {"amplitude_max", c.prior.amplitude_max},
                   {"wavelength_min", c.prior.wavelength_min}, {"wavelength_max", c.prior.wavelength_max},
                   {"offset_min", c.prior.offset_min},     {"offset_max", c.prior.offset_max},
                   {"lambda_channel", c.prior.lambda_channel}, {"lambda_host", c.prior.lambda_host}};
  root["truth_index"] = c.truth_index;
  root["load"] = {{"rho_g", c.rho_g}};
  json red = kernel_json(c.reduction.kernel);
  if (c.reduction.selection.dimension) red["dimension"] = *c.reduction.selection.dimension;
  if (c.reduction.selection.energy_fraction) red["energy_fraction"] = *c.reduction.selection.energy_fraction;
  root["reduction"] = red;
  root["pce"] = {{"order", c.pce.order}, {"quadrature_points", c.pce.quadrature_points}};
  json bounds = json::array();
  for (Boundary b : c.observations.boundaries) bounds.push_back(std::string(to_string(b)));
  root["observations"] = {{"boundaries", bounds}, {"noise_std", c.observations.noise_std}, {"seed", c.observations.seed}};
  json lik = {{"noise_std_relative", c.likelihood.noise_std_relative}, {"scale", c.likelihood.scale}};
  if (c.likelihood.noise_std) lik["noise_std"] = *c.likelihood.noise_std;
  root["likelihood"] = lik;
  root["preimage"] = {{"tolerance", c.preimage.tolerance},
                      {"max_iterations", c.preimage.max_iterations},
                      {"max_restarts", c.preimage.max_restarts}};
  json runs = json::array();
  for (const auto& r : c.sampling.runs)
    runs.push_back({{"name", r.name}, {"model", r.model}, {"sampler", to_string(r.sampler)}});
  json samp = {{"seed", c.sampling.seed},   {"n_samples", c.sampling.n_samples},
               {"tau", c.sampling.tau},     {"rw_std", c.sampling.rw_std},
               {"init_fills", c.sampling.init_fills}, {"histogram_bins", c.sampling.histogram_bins},
               {"runs", runs}};
  if (c.sampling.burn_in) samp["burn_in"] = *c.sampling.burn_in;
  root["sampling"] = samp;
  json rep = {{"fidelity_degrees", c.report.fidelity_degrees}, {"fidelity_snapshots", c.report.fidelity_snapshots}};
  if (c.report.fidelity_dimension) rep["fidelity_dimension"] = *c.report.fidelity_dimension;
  if (c.report.fidelity_energy) rep["fidelity_energy"] = *c.report.fidelity_energy;
  root["report"] = rep;
  return root.dump(2) + "\n";
}

}  // namespace stochinv
