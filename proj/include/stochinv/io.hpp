#pragma once

// Persisted artifacts. Matrices and tables are whitespace-separated text with
// '#' comment lines; the reduction models are binary.

#include "stochinv/kpca.hpp"
#include "stochinv/mesh_fem.hpp"
#include "stochinv/pce.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace stochinv {

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& M, const std::string& header = {});
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v, const std::string& header = {});
Eigen::VectorXd read_vector(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Kernel, snapshots, eigenvectors, eigenvalues and r; Gram matrices are
/// recomputed on load.
void save_kpca(const std::filesystem::path& path, const KpcaModel& model);
KpcaModel load_kpca(const std::filesystem::path& path);

void save_pce(const std::filesystem::path& path, const PceModel& model);
PceModel load_pce(const std::filesystem::path& path);

/// Columns: dof, value, weight.
void save_observations(const std::filesystem::path& path, const ObservationSet& obs);
ObservationSet load_observations(const std::filesystem::path& path);

}  // namespace stochinv
