#pragma once

// Kernel PCA over a snapshot ensemble, with fixed-point pre-imaging back to
// the snapshot space and the implicit derivative of that pre-image map.
//
// With a linear kernel every operation reduces to classical PCA.

#include <Eigen/Core>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stochinv {

enum class KernelKind { polynomial, gaussian, linear };

std::string_view to_string(KernelKind kind);
KernelKind kernel_kind_from_string(std::string_view name);

/// k(x, y) = c + (x . y)^d, k(x, y) = exp(-|x - y|^2 / sigma), or x . y.
struct Kernel {
  static constexpr int kMaxDegree = 5;

  KernelKind kind = KernelKind::linear;
  int degree = 1;
  double offset = 0.0;
  double sigma = 1.0;

  static Kernel polynomial(int degree, double offset = 0.0);
  static Kernel gaussian(double sigma);
  static Kernel linear();

  void validate() const;
  /// Degree of the polynomial part; 1 for the linear kernel, 0 for gaussian.
  int polynomial_degree() const;
  std::string describe() const;
};

double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Gram matrix of the columns of Y.
Eigen::MatrixXd gram_matrix(const Kernel& kernel, const Eigen::MatrixXd& Y);

/// K - K 1 - 1 K + 1 K 1 with 1 the all-(1/M) matrix.
Eigen::MatrixXd center_gram(const Eigen::MatrixXd& K);

/// Either a fixed retained dimension or the smallest dimension reaching a
/// fraction of the positive spectrum.
struct DimensionSelection {
  std::optional<int> dimension;
  std::optional<double> energy_fraction;

  static DimensionSelection fixed(int r) { return {r, std::nullopt}; }
  static DimensionSelection energy(double fraction) { return {std::nullopt, fraction}; }
};

class KpcaModel {
 public:
  KpcaModel() = default;

  /// Eigen-decomposes (1/M) Kc; eigenvalues below 1e-12 * lambda_max are
  /// discarded.
  static KpcaModel fit(const Eigen::MatrixXd& Y, const Kernel& kernel, const DimensionSelection& selection);

  /// Rebuilds a model from persisted parts, recomputing the Gram matrices.
  static KpcaModel from_parts(const Eigen::MatrixXd& Y, const Kernel& kernel, const Eigen::MatrixXd& V,
                              const Eigen::VectorXd& eigenvalues, int dimension);

  const Kernel& kernel() const { return kernel_; }
  const Eigen::MatrixXd& snapshots() const { return Y_; }
  const Eigen::MatrixXd& gram() const { return K_; }
  const Eigen::MatrixXd& centered_gram() const { return Kc_; }
  /// Orthonormal eigenvectors for every positive eigenvalue kept (M x n).
  const Eigen::MatrixXd& eigenvectors() const { return V_; }
  /// Eigenvalues of (1/M) Kc, descending.
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  /// Training feature coordinates, M x r.
  const Eigen::MatrixXd& training_coordinates() const { return Xi_; }

  int dimension() const { return r_; }
  int realizations() const { return static_cast<int>(Y_.cols()); }
  int node_count() const { return static_cast<int>(Y_.rows()); }
  bool fitted() const { return r_ > 0; }

  /// Retained eigenvectors, M x r.
  Eigen::Ref<const Eigen::MatrixXd> retained_vectors() const { return V_.leftCols(r_); }

  /// Map from xi to the pre-image expansion weights: beta = B xi + 1/M.
  const Eigen::MatrixXd& weight_map() const { return B_; }

  /// Snapshot mean, the pre-image of the feature-space mean under the linear kernel.
  Eigen::VectorXd snapshot_mean() const { return Y_.rowwise().mean(); }

  /// Squared column norms of Y.
  const Eigen::VectorXd& snapshot_norms_sq() const { return norms_sq_; }

  /// Linear Gram Y^T Y.
  const Eigen::MatrixXd& linear_gram() const { return YtY_; }

  /// Feature coordinates of an arbitrary snapshot (projection onto the
  /// retained feature-space eigenbasis).
  Eigen::VectorXd project(const Eigen::VectorXd& y) const;

 private:
  void finalize();

  Kernel kernel_;
  Eigen::MatrixXd Y_;
  Eigen::MatrixXd YtY_;
  Eigen::VectorXd norms_sq_;
  Eigen::MatrixXd K_;
  Eigen::MatrixXd Kc_;
  Eigen::VectorXd K_row_mean_;
  double K_mean_ = 0.0;
  Eigen::MatrixXd V_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd Xi_;
  Eigen::MatrixXd B_;
  int r_ = 0;
};

/// Xi_d = sqrt(M) V_r: row l holds the coordinates of training snapshot l.
Eigen::MatrixXd feature_coordinates(const KpcaModel& model);

/// Expansion weights over the training feature points of
/// (1/sqrt(M)) Phi~ V xi + Phi_bar; they sum to one.
Eigen::VectorXd feature_weights(const KpcaModel& model, const Eigen::VectorXd& xi);

struct PreimageOptions {
  double tolerance = 1e-8;  // on |y_{k+1} - y_k| / (1 + |y_k|)
  int max_iterations = 500;
  int max_restarts = 5;
};

struct PreimageResult {
  Eigen::VectorXd y;
  int iterations = 0;
  int restarts = 0;
  bool converged = false;
  int start_index = -1;  // training snapshot used as the initial iterate, -1 for a caller init
};

/// Training snapshot indices ordered by feature-space distance to Y_f(xi).
std::vector<int> nearest_training_snapshots(const KpcaModel& model, const Eigen::VectorXd& xi);

/// Fixed-point pre-image of the feature point Y_f(xi). Starts from `init`
/// when given, otherwise from the nearest training snapshot in feature space.
/// Throws NumericalError when every restart diverges.
PreimageResult preimage(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd* init = nullptr,
                        const PreimageOptions& options = {});

/// Value of the fixed-point map G(y, xi).
Eigen::VectorXd preimage_map(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& y);

/// dy/dxi at a fixed point: (I - dG/dy) J = dG/dxi. N_R x r.
Eigen::MatrixXd preimage_jacobian(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& y_star);

enum class JacobianSolver { automatic, dense, krylov };

/// J^T v without forming J: one adjoint solve (I - dG/dy)^T z = v.
Eigen::VectorXd preimage_vjp(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& y_star,
                             const Eigen::VectorXd& v, JacobianSolver solver = JacobianSolver::automatic);

}  // namespace stochinv
