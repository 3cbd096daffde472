#include "stochinv/mcmc.hpp"

#include "stochinv/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <future>

namespace stochinv {

GaussianDensity::GaussianDensity(Eigen::VectorXd mean, const Eigen::MatrixXd& cov) : mean_(std::move(mean)) {
  if (cov.rows() != mean_.size() || cov.cols() != mean_.size()) throw InvalidArgument("covariance shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw InvalidArgument("covariance is not positive definite");
  precision_ = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
}

GaussianDensity GaussianDensity::standard(int dimension) {
  return GaussianDensity(Eigen::VectorXd::Zero(dimension), Eigen::MatrixXd::Identity(dimension, dimension));
}

DensityEval GaussianDensity::evaluate(const Eigen::VectorXd& x, bool with_gradient, const DensityEval*) const {
  DensityEval out;
  if (x.size() != mean_.size() || !x.allFinite()) {
    out.failure = "state is not a finite vector of the right length";
    return out;
  }
  const Eigen::VectorXd g = -(precision_ * (x - mean_));
  out.log_density = 0.5 * (x - mean_).dot(g);
  if (with_gradient) out.grad = g;
  return out;
}

std::string to_string(SamplerKind kind) { return kind == SamplerKind::langevin ? "langevin" : "random_walk"; }

SamplerKind sampler_kind_from_string(const std::string& name) {
  if (name == "langevin" || name == "mala") return SamplerKind::langevin;
  if (name == "random_walk" || name == "rw") return SamplerKind::random_walk;
  throw InvalidArgument("unknown sampler kind '" + name + "'");
}

void SamplerConfig::validate() const {
  if (kind == SamplerKind::langevin && !(tau > 0.0)) throw InvalidArgument("langevin step tau must be > 0");
  if (kind == SamplerKind::random_walk && !(rw_std > 0.0)) throw InvalidArgument("random-walk std must be > 0");
  if (n_samples < 0) throw InvalidArgument("sample count must be >= 0");
  if (burn_in && (*burn_in < 0 || *burn_in > n_samples)) throw InvalidArgument("burn-in outside [0, n_samples]");
}

int SamplerConfig::effective_burn_in() const { return burn_in ? *burn_in : n_samples / 5; }

Eigen::VectorXd SamplerConfig::initial_state(int dimension) const {
  if (init.size() == 0) return Eigen::VectorXd::Constant(dimension, init_fill);
  if (init.size() != dimension) throw InvalidArgument("initial state has the wrong length");
  return init;
}

Eigen::VectorXd langevin_propose(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, double tau,
                                 const Eigen::VectorXd& z) {
  return x + tau * grad + std::sqrt(2.0 * tau) * z;
}

namespace {

Eigen::VectorXd standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = nd(rng);
  return z;
}

}  // namespace

Eigen::VectorXd langevin_propose(const Eigen::VectorXd& x, const Eigen::VectorXd& grad, double tau,
                                 std::mt19937_64& rng) {
  return langevin_propose(x, grad, tau, standard_normal(rng, x.size()));
}

double langevin_log_q(const Eigen::VectorXd& x_to, const Eigen::VectorXd& x_from, const Eigen::VectorXd& grad_from,
                      double tau) {
  return -(x_to - x_from - tau * grad_from).squaredNorm() / (4.0 * tau);
}

double log_acceptance_ratio(const ChainState& from, const ChainState& to, const SamplerConfig& cfg) {
  if (!to.eval.ok()) return -std::numeric_limits<double>::infinity();
  double r = to.eval.log_density - from.eval.log_density;
  if (cfg.kind == SamplerKind::langevin) {
    r += langevin_log_q(from.x, to.x, to.eval.grad, cfg.tau) - langevin_log_q(to.x, from.x, from.eval.grad, cfg.tau);
  }
  return std::isnan(r) ? -std::numeric_limits<double>::infinity() : r;
}

StepResult mh_step(const ChainState& state, const LogDensity& density, const SamplerConfig& cfg,
                   std::mt19937_64& rng) {
  const bool langevin = cfg.kind == SamplerKind::langevin;
  if (langevin && !state.eval.has_gradient()) throw InvalidArgument("langevin step needs the current gradient");

  ChainState prop;
  const Eigen::VectorXd z = standard_normal(rng, state.x.size());
  prop.x = langevin ? langevin_propose(state.x, state.eval.grad, cfg.tau, z) : Eigen::VectorXd(state.x + cfg.rw_std * z);
  prop.eval = density.evaluate(prop.x, langevin, &state.eval);

  StepResult out;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  if (!prop.eval.ok() || (langevin && !prop.eval.has_gradient())) {
    out.state = state;
    out.proposal_failed = true;
    return out;
  }
  out.log_alpha = log_acceptance_ratio(state, prop, cfg);
  out.accepted = std::log(u) < out.log_alpha;
  out.state = out.accepted ? std::move(prop) : state;
  return out;
}

ChainRecord run_chain(const LogDensity& density, const SamplerConfig& cfg, int chain_index,
                      const ChainObserver& observer) {
  cfg.validate();
  const int r = density.dimension();
  ChainRecord rec;
  rec.kind = cfg.kind;
  rec.seed = cfg.seed;
  rec.samples.resize(cfg.n_samples, r);
  rec.log_posts.resize(cfg.n_samples);
  rec.accepted.assign(static_cast<std::size_t>(cfg.n_samples), 0);

  int done = 0;
  try {
    ChainState state;
    state.x = cfg.initial_state(r);
    state.eval = density.evaluate(state.x, cfg.kind == SamplerKind::langevin);
    if (!state.eval.ok() || (cfg.kind == SamplerKind::langevin && !state.eval.has_gradient())) {
      throw NumericalError("initial state has no finite log-density" +
                           (state.eval.failure.empty() ? std::string() : ": " + state.eval.failure));
    }
    std::mt19937_64 rng(cfg.seed);
    int accepted = 0;
    for (int k = 0; k < cfg.n_samples; ++k) {
      StepResult step = mh_step(state, density, cfg, rng);
      state = std::move(step.state);
      rec.samples.row(k) = state.x.transpose();
      rec.log_posts[k] = state.eval.log_density;
      rec.accepted[static_cast<std::size_t>(k)] = step.accepted ? 1 : 0;
      accepted += step.accepted ? 1 : 0;
      rec.proposal_failures += step.proposal_failed ? 1 : 0;
      done = k + 1;
      if (observer) observer(chain_index, k, state, step.accepted);
    }
    rec.acceptance_rate = cfg.n_samples > 0 ? static_cast<double>(accepted) / cfg.n_samples : 0.0;
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.samples.conservativeResize(done, r);
    rec.log_posts.conservativeResize(done);
    rec.accepted.resize(static_cast<std::size_t>(done));
    const auto acc = std::count(rec.accepted.begin(), rec.accepted.end(), 1);
    rec.acceptance_rate = done > 0 ? static_cast<double>(acc) / done : 0.0;
  }
  return rec;
}

std::vector<ChainRecord> run_chains(const LogDensity& density, const std::vector<SamplerConfig>& cfgs,
                                    const ChainObserver& observer) {
  if (cfgs.empty()) throw InvalidArgument("at least one chain configuration is required");
  for (const auto& c : cfgs) c.validate();
  std::vector<std::future<ChainRecord>> jobs;
  jobs.reserve(cfgs.size());
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    jobs.push_back(std::async(std::launch::async, [&, c] {
      return run_chain(density, cfgs[c], static_cast<int>(c), observer);
    }));
  }
  std::vector<ChainRecord> out;
  out.reserve(jobs.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

double potential_scale_reduction(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw InvalidArgument("R-hat needs at least two chains");
  const Eigen::Index n = chains.front().size();
  if (n < 2) throw InvalidArgument("R-hat needs at least two samples per chain");
  const auto m = static_cast<double>(chains.size());
  Eigen::VectorXd means(chains.size());
  double W = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    if (chains[c].size() != n) throw InvalidArgument("R-hat chains differ in length");
    means[c] = chains[c].mean();
    W += (chains[c].array() - means[c]).square().sum() / static_cast<double>(n - 1);
  }
  W /= m;
  const double B_over_n = (means.array() - means.mean()).square().sum() / (m - 1.0);
  if (W == 0.0) return B_over_n == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(1.0 + B_over_n / W);
}

int first_agreement_iteration(const std::vector<ChainRecord>& records, double tolerance) {
  if (records.size() < 2) throw InvalidArgument("agreement needs at least two chains");
  const int n = records.front().size();
  const Eigen::Index r = records.front().samples.cols();
  std::vector<Eigen::MatrixXd> running;
  for (const auto& rec : records) {
    if (rec.size() != n) throw InvalidArgument("chains differ in length");
    Eigen::MatrixXd m(n, r);
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(r);
    for (int k = 0; k < n; ++k) {
      acc += rec.samples.row(k);
      m.row(k) = acc / static_cast<double>(k + 1);
    }
    running.push_back(std::move(m));
  }
  int first = n;
  for (int k = n - 1; k >= 0; --k) {
    Eigen::RowVectorXd lo = running[0].row(k), hi = running[0].row(k);
    for (std::size_t c = 1; c < running.size(); ++c) {
      lo = lo.cwiseMin(running[c].row(k));
      hi = hi.cwiseMax(running[c].row(k));
    }
    if ((hi - lo).maxCoeff() > tolerance) break;
    first = k;
  }
  return first;
}

DiagnosticsReport diagnostics(const std::vector<ChainRecord>& records, std::optional<int> burn_in,
                              double agreement_tolerance) {
  if (records.size() < 2) throw InvalidArgument("diagnostics need at least two chains");
  for (const auto& rec : records) {
    if (!rec.ok()) throw InvalidArgument("cannot diagnose a failed chain: " + rec.error);
  }
  const int n = records.front().size();
  const int b = burn_in ? *burn_in : n / 5;
  if (b < 0 || n - b < 2) {
    throw InvalidArgument("insufficient samples: " + std::to_string(n) + " with burn-in " + std::to_string(b));
  }
  const Eigen::Index r = records.front().samples.cols();

  DiagnosticsReport rep;
  rep.burn_in = b;
  rep.agreement_tolerance = agreement_tolerance;
  rep.rhat.resize(r);
  rep.mean.resize(r);
  rep.stddev.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    std::vector<Eigen::VectorXd> cols;
    for (const auto& rec : records) {
      if (rec.size() != n) throw InvalidArgument("chains differ in length");
      cols.emplace_back(rec.samples.col(j).tail(n - b));
    }
    rep.rhat[j] = potential_scale_reduction(cols);
    double sum = 0.0, sq = 0.0, count = 0.0;
    for (const auto& c : cols) {
      sum += c.sum();
      count += static_cast<double>(c.size());
    }
    const double mean = sum / count;
    for (const auto& c : cols) sq += (c.array() - mean).square().sum();
    rep.mean[j] = mean;
    rep.stddev[j] = std::sqrt(sq / (count - 1.0));
  }
  for (const auto& rec : records) rep.acceptance_rates.push_back(rec.acceptance_rate);
  rep.agreement_iteration = first_agreement_iteration(records, agreement_tolerance);
  return rep;
}

}  // namespace stochinv
