#include "stochinv/posterior.hpp"

#include "stochinv/error.hpp"

#include <cmath>

namespace stochinv {

void PosteriorSpec::validate() const {
  if (!kpca || !kpca->fitted()) throw InvalidArgument("posterior needs a fitted KPCA model");
  if (!pce || pce->dimension() != kpca->dimension()) {
    throw InvalidArgument("PCE dimension does not match the KPCA dimension");
  }
  if (kpca->node_count() != mesh.node_count()) throw InvalidArgument("snapshot length does not match the mesh");
  if (!(noise_variance > 0.0)) throw InvalidArgument("noise variance must be > 0");
  if (!(likelihood_scale >= 1.0)) throw InvalidArgument("likelihood scale must be >= 1");
  stochinv::validate(mesh);
  stochinv::validate(obs, mesh.dof_count());
}

Pipeline forward_pipeline(const PosteriorSpec& spec, const Eigen::VectorXd& eta, const Eigen::VectorXd* y_init) {
  Pipeline p;
  try {
    p.xi = eval_pce(*spec.pce, eta);
  } catch (const Error& e) {
    throw StageError("pce", e.what());
  }
  try {
    p.preimage = preimage(*spec.kpca, p.xi, y_init, spec.preimage);
    p.y = p.preimage.y;
  } catch (const Error& e) {
    throw StageError("preimage", e.what());
  }
  try {
    if (!p.y.allFinite()) throw NumericalError("pre-image is not finite");
    const LinearSystem sys = assemble_system(spec.mesh, MaterialField::from_log_lambda(p.y), spec.load);
    p.forward = solve_forward(sys);
  } catch (const Error& e) {
    throw StageError("fem", e.what());
  }
  return p;
}

PosteriorEval log_posterior(const PosteriorSpec& spec, const Eigen::VectorXd& eta, const Eigen::VectorXd* y_init) {
  PosteriorEval ev;
  ev.eta = eta;
  if (eta.size() != spec.dimension() || !eta.allFinite()) {
    ev.failure = "posterior: eta must be a finite vector of length " + std::to_string(spec.dimension());
    return ev;
  }
  ev.prior_term = 0.5 * eta.squaredNorm();
  try {
    Pipeline p = forward_pipeline(spec, eta, y_init);
    ev.xi = std::move(p.xi);
    ev.y = std::move(p.y);
    ev.preimage_iterations = p.preimage.iterations;
    ev.preimage_converged = p.preimage.converged;
    ev.u = p.forward.u;
    ev.forward = std::move(p.forward);
    ev.misfit = cost_misfit(ev.u, spec.obs) / spec.noise_variance;
    ev.log_post = -(spec.likelihood_scale * ev.misfit + ev.prior_term);
    if (!std::isfinite(ev.log_post)) {
      ev.log_post = -std::numeric_limits<double>::infinity();
      ev.failure = "posterior: non-finite log-density";
    }
  } catch (const Error& e) {
    ev.log_post = -std::numeric_limits<double>::infinity();
    ev.failure = e.what();
  }
  return ev;
}

Eigen::VectorXd grad_log_posterior(const PosteriorSpec& spec, const PosteriorEval& at) {
  if (!at.ok() || !at.forward.factorization) throw InvalidArgument("gradient needs a successful evaluation");
  Eigen::VectorXd g_y;
  try {
    const Eigen::VectorXd w = solve_adjoint(at.forward, spec.obs);
    const MaterialField mat = MaterialField::from_log_lambda(at.y);
    g_y = material_gradient(spec.mesh, mat, at.u, w).log_lambda_gradient(at.y) / spec.noise_variance;
  } catch (const Error& e) {
    throw StageError("adjoint", e.what());
  }
  Eigen::VectorXd g_xi;
  try {
    g_xi = preimage_vjp(*spec.kpca, at.xi, at.y, g_y, spec.jacobian_solver);
  } catch (const Error& e) {
    throw StageError("preimage-jacobian", e.what());
  }
  const Eigen::VectorXd g_eta = pce_derivative(*spec.pce, at.eta).cwiseProduct(g_xi);
  return -spec.likelihood_scale * g_eta - at.eta;
}

PosteriorEval evaluate_posterior(const PosteriorSpec& spec, const Eigen::VectorXd& eta, bool with_gradient,
                                 const Eigen::VectorXd* y_init) {
  PosteriorEval ev = log_posterior(spec, eta, y_init);
  if (with_gradient && ev.ok()) {
    try {
      ev.grad = grad_log_posterior(spec, ev);
      if (!ev.grad.allFinite()) {
        ev.grad.resize(0);
        ev.failure = "gradient: non-finite entries";
      }
    } catch (const Error& e) {
      ev.failure = e.what();
    }
  }
  return ev;
}

PosteriorDensity::PosteriorDensity(std::shared_ptr<const PosteriorSpec> spec) : spec_(std::move(spec)) {
  if (!spec_) throw InvalidArgument("posterior density needs a spec");
  spec_->validate();
}

const PosteriorEval* PosteriorDensity::details(const DensityEval& e) {
  return static_cast<const PosteriorEval*>(e.context.get());
}

DensityEval PosteriorDensity::evaluate(const Eigen::VectorXd& x, bool with_gradient,
                                       const DensityEval* warm_start) const {
  const Eigen::VectorXd* y_init = nullptr;
  if (warm_start) {
    if (const PosteriorEval* prev = details(*warm_start); prev && prev->y.size() == spec_->mesh.node_count()) {
      y_init = &prev->y;
    }
  }
  auto ev = std::make_shared<PosteriorEval>(evaluate_posterior(*spec_, x, with_gradient, y_init));
  DensityEval out;
  out.failure = ev->failure;
  if (std::isfinite(ev->log_post)) out.log_density = ev->log_post;
  out.grad = ev->grad;
  // The factorization is not needed once the gradient is known.
  ev->forward.factorization.reset();
  out.context = std::move(ev);
  return out;
}

}  // namespace stochinv
