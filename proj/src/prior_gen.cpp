#include "stochinv/prior_gen.hpp"

#include "stochinv/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace stochinv {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void ChannelSpec::validate() const {
  if (min_channels < 0 || max_channels < min_channels) throw InvalidArgument("channel count range is invalid");
  if (!(width_min > 0.0) || width_max > 0.5 || width_max < width_min) {
    throw InvalidArgument("channel width fraction must lie in (0, 0.5]");
  }
  if (amplitude_min < 0.0 || amplitude_max < amplitude_min) throw InvalidArgument("amplitude range is invalid");
  if (!(wavelength_min > 0.0) || wavelength_max < wavelength_min) throw InvalidArgument("wavelength range is invalid");
  if (offset_max < offset_min) throw InvalidArgument("offset range is invalid");
  if (!(lambda_channel > 0.0) || !(lambda_host > 0.0)) throw InvalidArgument("Lame parameters must be positive");
}

Eigen::VectorXd generate_realization(const Mesh& mesh, const ChannelSpec& spec, std::uint64_t stream,
                                     Eigen::VectorXi* channel_ids) {
  std::mt19937_64 rng(mix_seed(spec.seed, stream));
  auto uniform = [&rng](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const int count = std::uniform_int_distribution<int>(spec.min_channels, spec.max_channels)(rng);

  const double dy = mesh.height / mesh.ny;
  Eigen::VectorXi ids = Eigen::VectorXi::Constant(mesh.node_count(), -1);

  for (int c = 0; c < count; ++c) {
    const double half = 0.5 * uniform(spec.width_min, spec.width_max) * mesh.height;
    const double amp = uniform(spec.amplitude_min, spec.amplitude_max) * mesh.height;
    const double wave = uniform(spec.wavelength_min, spec.wavelength_max) * mesh.width;
    const double phase = uniform(0.0, 2.0 * std::numbers::pi);
    const double offset = uniform(spec.offset_min, spec.offset_max) * mesh.height;

    int prev_lo = -1, prev_hi = -1;
    for (int i = 0; i <= mesh.nx; ++i) {
      const double x = mesh.width * i / mesh.nx;
      const double yc = offset + amp * std::sin(2.0 * std::numbers::pi * x / wave + phase);
      int lo = static_cast<int>(std::ceil((yc - half) / dy - 1e-12));
      int hi = static_cast<int>(std::floor((yc + half) / dy + 1e-12));
      lo = std::max(lo, 0);
      hi = std::min(hi, mesh.ny);
      if (lo > hi) {
        // Band thinner than the grid or clipped away: keep the closest row.
        const int nearest = std::clamp(static_cast<int>(std::lround(yc / dy)), 0, mesh.ny);
        lo = hi = nearest;
      }
      // Bridge vertical gaps between neighbouring columns so each band is
      // one 4-connected node set.
      int fill_lo = lo, fill_hi = hi;
      if (prev_lo >= 0) {
        if (prev_hi < lo) fill_lo = prev_hi;
        if (prev_lo > hi) fill_hi = prev_lo;
      }
      for (int j = fill_lo; j <= fill_hi; ++j) {
        const int n = mesh.node_index(i, j);
        if (ids[n] < 0) ids[n] = c;
      }
      prev_lo = lo;
      prev_hi = hi;
    }
  }

  const double y_channel = std::log(spec.lambda_channel);
  const double y_host = std::log(spec.lambda_host);
  Eigen::VectorXd y(mesh.node_count());
  for (int n = 0; n < mesh.node_count(); ++n) y[n] = ids[n] >= 0 ? y_channel : y_host;
  if (channel_ids) *channel_ids = std::move(ids);
  return y;
}

SnapshotSet generate_snapshots(const Mesh& mesh, const ChannelSpec& spec, int count) {
  spec.validate();
  if (count < 2) throw InvalidArgument("at least two realizations are required");
  SnapshotSet set;
  set.mesh = MeshIdentity::of(mesh);
  set.spec = spec;
  set.Y.resize(mesh.node_count(), count);
  for (int m = 0; m < count; ++m) {
    set.Y.col(m) = generate_realization(mesh, spec, static_cast<std::uint64_t>(m));
  }
  return set;
}

HoldOut hold_out(const SnapshotSet& set, int index) {
  const int M = set.realizations();
  if (index < 0 || index >= M) {
    throw InvalidArgument("hold-out index " + std::to_string(index) + " out of range [0, " + std::to_string(M) + ")");
  }
  HoldOut out;
  out.truth = set.Y.col(index);
  out.rest.mesh = set.mesh;
  out.rest.spec = set.spec;
  out.rest.Y.resize(set.Y.rows(), M - 1);
  for (int m = 0, k = 0; m < M; ++m) {
    if (m != index) out.rest.Y.col(k++) = set.Y.col(m);
  }
  return out;
}

}  // namespace stochinv
