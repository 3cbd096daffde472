#pragma once

// Log-posterior over the standard-Gaussian chaos variables eta through the
// chain eta -> xi (PCE) -> y (pre-image) -> lambda = mu = exp(y) -> u (FEM).

#include "stochinv/kpca.hpp"
#include "stochinv/mcmc.hpp"
#include "stochinv/mesh_fem.hpp"
#include "stochinv/pce.hpp"

#include <Eigen/Core>

#include <limits>
#include <memory>
#include <string>

namespace stochinv {

struct PosteriorSpec {
  std::shared_ptr<const KpcaModel> kpca;
  std::shared_ptr<const PceModel> pce;
  Mesh mesh;
  LoadSpec load;
  ObservationSet obs;
  double noise_variance = 1.0;
  double likelihood_scale = 1.0;
  PreimageOptions preimage;
  JacobianSolver jacobian_solver = JacobianSolver::automatic;

  int dimension() const { return kpca ? kpca->dimension() : 0; }
  void validate() const;
};

struct Pipeline {
  Eigen::VectorXd xi;
  Eigen::VectorXd y;
  PreimageResult preimage;
  SolveResult forward;
};

/// eta -> (xi, y, u). `y_init` warm-starts the pre-image iteration. Failures
/// are rethrown as StageError labelled pce / preimage / fem.
Pipeline forward_pipeline(const PosteriorSpec& spec, const Eigen::VectorXd& eta, const Eigen::VectorXd* y_init = nullptr);

struct PosteriorEval {
  double log_post = -std::numeric_limits<double>::infinity();
  double misfit = 0.0;       // J1 = 1/(2 sigma^2) |u_obs - u|_D^2, before likelihood_scale
  double prior_term = 0.0;   // J2 = 1/2 |eta|^2
  Eigen::VectorXd eta;
  Eigen::VectorXd xi;
  Eigen::VectorXd y;
  Eigen::VectorXd u;
  Eigen::VectorXd grad;      // filled by grad_log_posterior
  int preimage_iterations = 0;
  bool preimage_converged = false;
  std::string failure;       // stage-labelled message when log_post = -inf
  SolveResult forward;

  bool ok() const { return failure.empty(); }
};

PosteriorEval log_posterior(const PosteriorSpec& spec, const Eigen::VectorXd& eta,
                            const Eigen::VectorXd* y_init = nullptr);

/// Gradient at a completed evaluation, reusing its factorization and
/// pre-image: one adjoint solve and one pre-image Jacobian solve.
Eigen::VectorXd grad_log_posterior(const PosteriorSpec& spec, const PosteriorEval& at);

/// log_posterior followed by grad_log_posterior. A gradient failure leaves
/// `grad` empty and records the reason.
PosteriorEval evaluate_posterior(const PosteriorSpec& spec, const Eigen::VectorXd& eta, bool with_gradient,
                                 const Eigen::VectorXd* y_init = nullptr);

/// Adapter for the samplers. Warm starts the pre-image from the pre-image
/// stored in the previous evaluation's context.
class PosteriorDensity : public LogDensity {
 public:
  explicit PosteriorDensity(std::shared_ptr<const PosteriorSpec> spec);

  int dimension() const override { return spec_->dimension(); }
  DensityEval evaluate(const Eigen::VectorXd& x, bool with_gradient,
                       const DensityEval* warm_start = nullptr) const override;

  const PosteriorSpec& spec() const { return *spec_; }

  /// The PosteriorEval stored in a DensityEval produced by this class.
  static const PosteriorEval* details(const DensityEval& e);

 private:
  std::shared_ptr<const PosteriorSpec> spec_;
};

}  // namespace stochinv
