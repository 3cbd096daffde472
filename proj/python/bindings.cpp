#include "stochinv/config.hpp"
#include "stochinv/error.hpp"
#include "stochinv/experiment.hpp"
#include "stochinv/kpca.hpp"
#include "stochinv/mcmc.hpp"
#include "stochinv/mesh_fem.hpp"
#include "stochinv/pce.hpp"
#include "stochinv/posterior.hpp"
#include "stochinv/prior_gen.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace stochinv;

namespace {

std::vector<Boundary> boundaries(const std::vector<std::string>& names) {
  std::vector<Boundary> out;
  for (const auto& n : names) out.push_back(boundary_from_string(n));
  return out;
}

DimensionSelection selection(std::optional<int> dimension, std::optional<double> energy_fraction) {
  if (dimension.has_value() == energy_fraction.has_value())
    throw InvalidArgument("give exactly one of dimension or energy_fraction");
  return dimension ? DimensionSelection::fixed(*dimension) : DimensionSelection::energy(*energy_fraction);
}

py::dict run_dict(const RunSummary& r) {
  py::dict d;
  d["name"] = r.name;
  d["model"] = r.model;
  d["sampler"] = to_string(r.sampler);
  d["acceptance_rates"] = r.acceptance_rates;
  d["mean_acceptance"] = r.mean_acceptance;
  d["agreement_iteration"] = r.agreement_iteration;
  d["max_rhat"] = r.max_rhat;
  d["proposal_failures"] = r.proposal_failures;
  d["chain_errors"] = r.chain_errors;
  d["distance_to_projected_truth"] = r.distance_to_projected_truth;
  d["distance_to_truth"] = r.distance_to_truth;
  return d;
}

StageOptions stage_options(const std::filesystem::path& out, std::optional<std::uint64_t> seed,
                           std::optional<int> chains) {
  StageOptions o;
  o.out = out;
  o.seed = seed;
  o.chains = chains;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kernel-PCA stochastic inversion of elastic parameter fields";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  // mesh_fem
  py::class_<Mesh>(m, "Mesh")
      .def_readonly("nx", &Mesh::nx)
      .def_readonly("ny", &Mesh::ny)
      .def_readonly("width", &Mesh::width)
      .def_readonly("height", &Mesh::height)
      .def_property_readonly("node_count", &Mesh::node_count)
      .def_property_readonly("dof_count", &Mesh::dof_count)
      .def_property_readonly("coordinates",
                             [](const Mesh& mesh) {
                               Eigen::MatrixXd X(mesh.node_count(), 2);
                               for (int n = 0; n < mesh.node_count(); ++n)
                                 X.row(n) = mesh.node_coords[static_cast<std::size_t>(n)].transpose();
                               return X;
                             })
      .def("boundary_nodes",
           [](const Mesh& mesh, const std::vector<std::string>& names) { return boundary_nodes(mesh, boundaries(names)); },
           py::arg("boundaries"));
  m.def("structured_mesh", &build_structured_mesh, py::arg("nx"), py::arg("ny"), py::arg("width") = 1.0,
        py::arg("height") = 1.0);

  m.def(
      "solve_forward",
      [](const Mesh& mesh, const Eigen::VectorXd& log_lambda, double rho_g) {
        return solve_forward(assemble_system(mesh, MaterialField::from_log_lambda(log_lambda), LoadSpec::self_weight(rho_g))).u;
      },
      py::arg("mesh"), py::arg("log_lambda"), py::arg("rho_g") = 0.1,
      "Displacements under self-weight with a pinned bottom edge.");

  m.def(
      "misfit_gradient",
      [](const Mesh& mesh, const Eigen::VectorXd& log_lambda, const std::vector<int>& dofs,
         const Eigen::VectorXd& values, double rho_g) {
        const MaterialField mat = MaterialField::from_log_lambda(log_lambda);
        const SolveResult f = solve_forward(assemble_system(mesh, mat, LoadSpec::self_weight(rho_g)));
        ObservationSet obs{dofs, values, Eigen::VectorXd::Ones(values.size())};
        validate(obs, mesh.dof_count(), &f.constrained);
        const Eigen::VectorXd w = solve_adjoint(f, obs);
        const Eigen::VectorXd g = material_gradient(mesh, mat, f.u, w).log_lambda_gradient(log_lambda);
        return py::make_tuple(cost_misfit(f.u, obs), g);
      },
      py::arg("mesh"), py::arg("log_lambda"), py::arg("dofs"), py::arg("values"), py::arg("rho_g") = 0.1,
      "Misfit 1/2 |u_obs - u|^2 and its adjoint gradient with respect to ln(lambda).");

  // prior_gen
  m.def(
      "generate_snapshots",
      [](const Mesh& mesh, int count, std::uint64_t seed) {
        ChannelSpec spec;
        spec.seed = seed;
        return generate_snapshots(mesh, spec, count).Y;
      },
      py::arg("mesh"), py::arg("count"), py::arg("seed") = 1, "Channelized ln(lambda) snapshots, one per column.");

  // kpca
  py::class_<Kernel>(m, "Kernel")
      .def_static("polynomial", &Kernel::polynomial, py::arg("degree"), py::arg("offset") = 0.0)
      .def_static("gaussian", &Kernel::gaussian, py::arg("sigma"))
      .def_static("linear", &Kernel::linear)
      .def_property_readonly("degree", &Kernel::polynomial_degree)
      .def("__repr__", &Kernel::describe);

  py::class_<PreimageResult>(m, "PreimageResult")
      .def_readonly("y", &PreimageResult::y)
      .def_readonly("iterations", &PreimageResult::iterations)
      .def_readonly("restarts", &PreimageResult::restarts)
      .def_readonly("converged", &PreimageResult::converged);

  py::class_<KpcaModel>(m, "KpcaModel")
      .def_static(
          "fit",
          [](const Eigen::MatrixXd& Y, const Kernel& kernel, std::optional<int> dimension,
             std::optional<double> energy_fraction) {
            return KpcaModel::fit(Y, kernel, selection(dimension, energy_fraction));
          },
          py::arg("snapshots"), py::arg("kernel"), py::arg("dimension") = py::none(),
          py::arg("energy_fraction") = py::none())
      .def_property_readonly("dimension", &KpcaModel::dimension)
      .def_property_readonly("eigenvalues", &KpcaModel::eigenvalues)
      .def_property_readonly("training_coordinates", &KpcaModel::training_coordinates)
      .def_property_readonly("snapshot_mean", &KpcaModel::snapshot_mean)
      .def("project", &KpcaModel::project, py::arg("y"))
      .def(
          "preimage",
          [](const KpcaModel& model, const Eigen::VectorXd& xi, double tolerance) {
            PreimageOptions o;
            o.tolerance = tolerance;
            return preimage(model, xi, nullptr, o);
          },
          py::arg("xi"), py::arg("tolerance") = 1e-8)
      .def(
          "preimage_jacobian",
          [](const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& y) {
            return preimage_jacobian(model, xi, y);
          },
          py::arg("xi"), py::arg("y"));

  // pce
  py::class_<PceModel>(m, "PceModel")
      .def_readonly("order", &PceModel::order)
      .def_readonly("coeffs", &PceModel::coeffs)
      .def_readonly("bandwidths", &PceModel::bandwidths)
      .def("__call__", &eval_pce, py::arg("eta"))
      .def("derivative", &pce_derivative, py::arg("eta"))
      .def("monotonicity_violations", [](const PceModel& p) { return monotonicity_violations(p); });
  m.def(
      "fit_pce",
      [](const Eigen::MatrixXd& Xi, int order, int quadrature_points) {
        return fit_pce(Xi, PceOptions{order, quadrature_points});
      },
      py::arg("coordinates"), py::arg("order") = 10, py::arg("quadrature_points") = 64);
  m.def("hermite", &hermite, py::arg("n"), py::arg("x"), "Probabilists' Hermite polynomial.");

  // mcmc
  py::class_<ChainRecord>(m, "ChainRecord")
      .def_readonly("samples", &ChainRecord::samples)
      .def_readonly("log_posts", &ChainRecord::log_posts)
      .def_property_readonly("accepted",
                             [](const ChainRecord& r) { return std::vector<bool>(r.accepted.begin(), r.accepted.end()); })
      .def_readonly("acceptance_rate", &ChainRecord::acceptance_rate)
      .def_readonly("seed", &ChainRecord::seed)
      .def_readonly("error", &ChainRecord::error);

  m.def(
      "sample_gaussian",
      [](const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const std::string& sampler, int n_samples,
         const std::vector<double>& fills, std::uint64_t seed, double tau, double rw_std) {
        const GaussianDensity target(mean, cov);
        std::vector<SamplerConfig> cfgs;
        for (std::size_t c = 0; c < fills.size(); ++c) {
          SamplerConfig s;
          s.kind = sampler_kind_from_string(sampler);
          s.n_samples = n_samples;
          s.tau = tau;
          s.rw_std = rw_std;
          s.seed = mix_seed(seed, c);
          s.init_fill = fills[c];
          cfgs.push_back(s);
        }
        py::gil_scoped_release release;
        return run_chains(target, cfgs);
      },
      py::arg("mean"), py::arg("cov"), py::arg("sampler") = "langevin", py::arg("n_samples") = 1000,
      py::arg("fills") = std::vector<double>{-2.0, 0.0, 2.0}, py::arg("seed") = 0, py::arg("tau") = 0.08,
      py::arg("rw_std") = 0.1, "Run MALA or random-walk chains on a Gaussian target.");

  m.def(
      "diagnostics",
      [](const std::vector<ChainRecord>& recs, std::optional<int> burn_in) {
        const DiagnosticsReport d = diagnostics(recs, burn_in);
        py::dict out;
        out["burn_in"] = d.burn_in;
        out["rhat"] = d.rhat;
        out["mean"] = d.mean;
        out["stddev"] = d.stddev;
        out["acceptance_rates"] = d.acceptance_rates;
        out["agreement_iteration"] = d.agreement_iteration;
        return out;
      },
      py::arg("records"), py::arg("burn_in") = py::none());

  // cli stages
  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_static("load", &load_config, py::arg("path"))
      .def_static("parse", &parse_config, py::arg("json"))
      .def("dump", &dump_config);

  m.def(
      "generate",
      [](const ExperimentConfig& c, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        cmd_generate(c, stage_options(out, seed, std::nullopt));
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def(
      "fit",
      [](const ExperimentConfig& c, const std::filesystem::path& out) {
        const FitSummary s = cmd_fit(c, stage_options(out, std::nullopt, std::nullopt));
        py::dict d;
        d["dimension"] = s.dimension;
        d["energy"] = s.energy;
        d["non_monotone"] = s.non_monotone;
        return d;
      },
      py::arg("config"), py::arg("out"));
  m.def(
      "synth_obs",
      [](const ExperimentConfig& c, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        const ObservationSummary s = cmd_synth_obs(c, stage_options(out, seed, std::nullopt));
        py::dict d;
        d["count"] = s.count;
        d["max_abs"] = s.max_abs;
        return d;
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none());
  m.def(
      "invert",
      [](const ExperimentConfig& c, const std::filesystem::path& out, std::optional<std::uint64_t> seed,
         std::optional<int> chains) {
        InvertSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_invert(c, stage_options(out, seed, chains));
        }
        py::dict d;
        d["noise_std"] = s.noise_std;
        d["burn_in"] = s.burn_in;
        d["prior_distance_to_projected_truth"] = s.prior_distance_to_projected_truth;
        py::list runs;
        for (const auto& r : s.runs) runs.append(run_dict(r));
        d["runs"] = runs;
        return d;
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none(), py::arg("chains") = py::none());
  m.def(
      "report",
      [](const ExperimentConfig& c, const std::filesystem::path& out) {
        const ReportSummary s = cmd_report(c, stage_options(out, std::nullopt, std::nullopt));
        py::list fid;
        for (const auto& f : s.fidelity) fid.append(py::make_tuple(f.degree, f.dimension, f.mean_error));
        py::dict d;
        d["preimage_fidelity"] = fid;
        d["runs"] = s.runs;
        return d;
      },
      py::arg("config"), py::arg("out"));
}
