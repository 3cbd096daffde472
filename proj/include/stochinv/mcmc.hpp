#pragma once

// Metropolis-adjusted Langevin and random-walk Metropolis samplers over a
// generic log-density, multi-chain orchestration and convergence diagnostics.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace stochinv {

/// One evaluation of a log-density. `context` carries model-specific data
/// (e.g. the pre-imaged field) that callers may reuse for warm starts.
struct DensityEval {
  double log_density = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;  // empty when not requested or unavailable
  std::shared_ptr<const void> context;
  std::string failure;

  bool ok() const { return log_density > -std::numeric_limits<double>::infinity(); }
  bool has_gradient() const { return grad.size() > 0; }
};

class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual int dimension() const = 0;
  /// Failures are reported through DensityEval (log_density = -inf), not thrown.
  virtual DensityEval evaluate(const Eigen::VectorXd& x, bool with_gradient,
                               const DensityEval* warm_start = nullptr) const = 0;
};

/// N(mean, cov) up to a constant.
class GaussianDensity : public LogDensity {
 public:
  GaussianDensity(Eigen::VectorXd mean, const Eigen::MatrixXd& cov);
  static GaussianDensity standard(int dimension);

  int dimension() const override { return static_cast<int>(mean_.size()); }
  DensityEval evaluate(const Eigen::VectorXd& x, bool with_gradient,
                       const DensityEval* warm_start = nullptr) const override;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd precision_;
};

enum class SamplerKind { langevin, random_walk };

std::string to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(const std::string& name);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::langevin;
  double tau = 0.08;
  double rw_std = 0.1;
  int n_samples = 0;
  std::optional<int> burn_in;  // default 20% of n_samples
  std::uint64_t seed = 0;
  Eigen::VectorXd init;  // used when non-empty
  double init_fill = 0.0;

  void validate() const;
  int effective_burn_in() const;
  Eigen::VectorXd initial_state(int dimension) const;
};

struct ChainState {
  Eigen::VectorXd x;
  DensityEval eval;
};

struct ChainRecord {
  SamplerKind kind = SamplerKind::langevin;
  Eigen::MatrixXd samples;  // n_samples x r
  Eigen::VectorXd log_posts;
  std::vector<char> accepted;
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  int proposal_failures = 0;
  std::string error;  // non-empty when the chain aborted

  int size() const { return static_cast<int>(samples.rows()); }
  bool ok() const { return error.empty(); }
};

/// x + tau grad + sqrt(2 tau) z.
Eigen::VectorXd langevin_propose(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, double tau,
                                 const Eigen::VectorXd& z);
Eigen::VectorXd langevin_propose(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, double tau,
                                 std::mt19937_64& rng);

/// log q(x_to | x_from) without its normalizing constant.
double langevin_log_q(const Eigen::VectorXd& x_to, const Eigen::VectorXd& x_from, const Eigen::VectorXd& grad_from,
                      double tau);

/// log of the Metropolis-Hastings ratio for a proposal from `from` to `to`.
double log_acceptance_ratio(const ChainState& from, const ChainState& to, const SamplerConfig& cfg);

struct StepResult {
  ChainState state;
  bool accepted = false;
  bool proposal_failed = false;
  double log_alpha = -std::numeric_limits<double>::infinity();
};

StepResult mh_step(const ChainState& state, const LogDensity& density, const SamplerConfig& cfg,
                   std::mt19937_64& rng);

/// Called after each iteration; must be thread-safe when chains run
/// concurrently.
using ChainObserver = std::function<void(int chain, int iteration, const ChainState& state, bool accepted)>;

ChainRecord run_chain(const LogDensity& density, const SamplerConfig& cfg, int chain_index = 0,
                      const ChainObserver& observer = {});

/// Chains run concurrently; a failing chain is reported in its record.
std::vector<ChainRecord> run_chains(const LogDensity& density, const std::vector<SamplerConfig>& cfgs,
                                    const ChainObserver& observer = {});

struct DiagnosticsReport {
  int burn_in = 0;
  Eigen::VectorXd rhat;
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<double> acceptance_rates;
  /// Earliest iteration from which every component's running means across
  /// chains stay within `agreement_tolerance`; equals the chain length when
  /// they never do.
  int agreement_iteration = 0;
  double agreement_tolerance = 0.2;
};

/// Potential scale reduction of equal-length chains (columns of one component).
double potential_scale_reduction(const std::vector<Eigen::VectorXd>& chains);

int first_agreement_iteration(const std::vector<ChainRecord>& records, double tolerance = 0.2);

DiagnosticsReport diagnostics(const std::vector<ChainRecord>& records, std::optional<int> burn_in = std::nullopt,
                              double agreement_tolerance = 0.2);

}  // namespace stochinv
