#pragma once

// Binary channelized log-parameter ensembles: sinusoidal channel bands of a
// soft material embedded in a stiff host, stored as y = ln(lambda).

#include "stochinv/mesh_fem.hpp"

#include <Eigen/Core>

#include <cstdint>

namespace stochinv {

struct ChannelSpec {
  int min_channels = 1;
  int max_channels = 3;
  // Band width as a fraction of the domain height.
  double width_min = 0.15;
  double width_max = 0.20;
  // Centerline y = offset + amplitude * sin(2 pi x / wavelength + phase);
  // amplitude and offset relative to height, wavelength relative to width.
  double amplitude_min = 0.05;
  double amplitude_max = 0.10;
  double wavelength_min = 0.9;
  double wavelength_max = 1.1;
  double offset_min = 0.1;
  double offset_max = 0.9;
  double lambda_channel = 10.0;  // MPa
  double lambda_host = 1000.0;   // MPa
  std::uint64_t seed = 1;

  void validate() const;
};

struct MeshIdentity {
  int nx = 0;
  int ny = 0;
  double width = 0.0;
  double height = 0.0;

  static MeshIdentity of(const Mesh& mesh) { return {mesh.nx, mesh.ny, mesh.width, mesh.height}; }
  int node_count() const { return (nx + 1) * (ny + 1); }
  bool operator==(const MeshIdentity&) const = default;
};

/// Columns are realizations, rows are mesh nodes.
struct SnapshotSet {
  Eigen::MatrixXd Y;
  MeshIdentity mesh;
  ChannelSpec spec;

  int node_count() const { return static_cast<int>(Y.rows()); }
  int realizations() const { return static_cast<int>(Y.cols()); }
};

/// One realization; `channel_ids` (optional) receives, per node, the index of
/// the first channel covering it or -1 for host material.
Eigen::VectorXd generate_realization(const Mesh& mesh, const ChannelSpec& spec, std::uint64_t stream,
                                     Eigen::VectorXi* channel_ids = nullptr);

SnapshotSet generate_snapshots(const Mesh& mesh, const ChannelSpec& spec, int count);

struct HoldOut {
  Eigen::VectorXd truth;
  SnapshotSet rest;
};

HoldOut hold_out(const SnapshotSet& set, int index);

/// SplitMix64 finalizer; used to derive independent per-stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace stochinv
