#include "stochinv/kpca.hpp"

#include "stochinv/error.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <unsupported/Eigen/IterativeSolvers>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace stochinv::detail {
class LinearOperator;
}

namespace Eigen::internal {

template <>
struct traits<stochinv::detail::LinearOperator> : public Eigen::internal::traits<Eigen::SparseMatrix<double>> {};

}  // namespace Eigen::internal

namespace stochinv {
namespace detail {

// Matrix-free operator z -> apply(z), usable with Eigen's iterative solvers.
class LinearOperator : public Eigen::EigenBase<LinearOperator> {
 public:
  using Scalar = double;
  using RealScalar = double;
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

  LinearOperator(Eigen::Index n, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn)
      : n_(n), fn_(std::move(fn)) {}

  Eigen::Index rows() const { return n_; }
  Eigen::Index cols() const { return n_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return fn_(x); }

  template <typename Rhs>
  Eigen::Product<LinearOperator, Rhs, Eigen::AliasFreeProduct> operator*(const Eigen::MatrixBase<Rhs>& x) const {
    return Eigen::Product<LinearOperator, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
  }

 private:
  Eigen::Index n_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> fn_;
};

}  // namespace detail
}  // namespace stochinv

namespace Eigen::internal {

template <typename Rhs>
struct generic_product_impl<stochinv::detail::LinearOperator, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<stochinv::detail::LinearOperator, Rhs,
                                generic_product_impl<stochinv::detail::LinearOperator, Rhs>> {
  using Scalar = typename Product<stochinv::detail::LinearOperator, Rhs>::Scalar;

  template <typename Dest>
  static void scaleAndAddTo(Dest& dst, const stochinv::detail::LinearOperator& lhs, const Rhs& rhs,
                            const Scalar& alpha) {
    dst.noalias() += alpha * lhs.apply(rhs);
  }
};

}  // namespace Eigen::internal

namespace stochinv {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::polynomial: return "polynomial";
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::linear: return "linear";
  }
  return "?";
}

KernelKind kernel_kind_from_string(std::string_view name) {
  for (KernelKind k : {KernelKind::polynomial, KernelKind::gaussian, KernelKind::linear}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown kernel kind '" + std::string(name) + "'");
}

Kernel Kernel::polynomial(int degree, double offset) {
  Kernel k;
  k.kind = KernelKind::polynomial;
  k.degree = degree;
  k.offset = offset;
  k.validate();
  return k;
}

Kernel Kernel::gaussian(double sigma) {
  Kernel k;
  k.kind = KernelKind::gaussian;
  k.sigma = sigma;
  k.validate();
  return k;
}

Kernel Kernel::linear() { return Kernel{}; }

void Kernel::validate() const {
  switch (kind) {
    case KernelKind::polynomial:
      if (degree < 1) throw InvalidArgument("polynomial kernel degree must be >= 1");
      if (degree > kMaxDegree) {
        throw InvalidArgument("polynomial kernel degree above " + std::to_string(kMaxDegree) +
                              " is not supported (unstable pre-image)");
      }
      if (!(offset >= 0.0) || !std::isfinite(offset)) throw InvalidArgument("polynomial kernel offset must be >= 0");
      break;
    case KernelKind::gaussian:
      if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidArgument("gaussian kernel sigma must be > 0");
      break;
    case KernelKind::linear:
      break;
  }
}

int Kernel::polynomial_degree() const {
  switch (kind) {
    case KernelKind::polynomial: return degree;
    case KernelKind::linear: return 1;
    case KernelKind::gaussian: return 0;
  }
  return 0;
}

std::string Kernel::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case KernelKind::polynomial: os << "polynomial(d=" << degree << ", c=" << offset << ")"; break;
    case KernelKind::gaussian: os << "gaussian(sigma=" << sigma << ")"; break;
    case KernelKind::linear: os << "linear"; break;
  }
  return os.str();
}

namespace {

double apply_kernel_to_products(const Kernel& k, double dot, double xx, double yy) {
  switch (k.kind) {
    case KernelKind::polynomial: return k.offset + std::pow(dot, k.degree);
    case KernelKind::gaussian: return std::exp(-std::max(xx + yy - 2.0 * dot, 0.0) / k.sigma);
    case KernelKind::linear: return dot;
  }
  return 0.0;
}

// sum_{j=1}^{d} j a^{j-1} and its derivative.
inline double poly_weight(double a, int d) {
  double s = 0.0, p = 1.0;
  for (int j = 1; j <= d; ++j) {
    s += j * p;
    p *= a;
  }
  return s;
}

inline double poly_weight_derivative(double a, int d) {
  double s = 0.0, p = 1.0;
  for (int j = 2; j <= d; ++j) {
    s += j * (j - 1) * p;
    p *= a;
  }
  return s;
}

// Everything the fixed-point map and its derivatives need at (y, xi).
struct MapTerms {
  Eigen::VectorXd beta;
  Eigen::VectorXd phi;  // kernel-derived weight per snapshot
  Eigen::VectorXd psi;  // d phi / d a for polynomial kernels
  double S = 0.0;
  double abs_sum = 0.0;
  Eigen::VectorXd G;
};

MapTerms map_terms(const KpcaModel& model, const Eigen::VectorXd& beta, const Eigen::VectorXd& y) {
  const Kernel& k = model.kernel();
  const Eigen::MatrixXd& Y = model.snapshots();
  MapTerms t;
  t.beta = beta;
  const Eigen::VectorXd a = Y.transpose() * y;
  const int M = model.realizations();
  t.phi.resize(M);
  if (k.kind == KernelKind::gaussian) {
    const Eigen::VectorXd dist = (model.snapshot_norms_sq().array() - 2.0 * a.array() + y.squaredNorm()).max(0.0);
    const double dmin = dist.minCoeff();
    t.phi = (-(dist.array() - dmin) / k.sigma).exp();
  } else {
    const int d = k.polynomial_degree();
    t.psi.resize(M);
    for (int i = 0; i < M; ++i) {
      t.phi[i] = poly_weight(a[i], d);
      t.psi[i] = poly_weight_derivative(a[i], d);
    }
  }
  const Eigen::VectorXd w = beta.cwiseProduct(t.phi);
  t.S = w.sum();
  t.abs_sum = w.cwiseAbs().sum();
  t.G = Y * w / t.S;
  return t;
}

bool denominator_ok(const MapTerms& t) {
  return std::isfinite(t.S) && std::abs(t.S) >= 1e-14 * std::max(t.abs_sum, 1e-300) && std::abs(t.S) > 0.0;
}

// Dense dG/dy.
Eigen::MatrixXd map_dy(const KpcaModel& model, const MapTerms& t, const Eigen::VectorXd& y) {
  const Eigen::MatrixXd& Y = model.snapshots();
  const Kernel& k = model.kernel();
  Eigen::MatrixXd Dphi;  // M x N_R
  if (k.kind == KernelKind::gaussian) {
    Dphi = (2.0 / k.sigma) * t.phi.asDiagonal() * (Y.transpose().rowwise() - y.transpose());
  } else {
    Dphi = t.psi.asDiagonal() * Y.transpose();
  }
  const Eigen::MatrixXd Yc = Y.colwise() - t.G;
  return Yc * (t.beta / t.S).asDiagonal() * Dphi;
}

// Dense dG/dxi.
Eigen::MatrixXd map_dxi(const KpcaModel& model, const MapTerms& t) {
  const Eigen::MatrixXd Yc = model.snapshots().colwise() - t.G;
  return Yc * (t.phi / t.S).asDiagonal() * model.weight_map();
}

// (dG/dy)^T z without forming the matrix.
Eigen::VectorXd map_dy_transpose_apply(const KpcaModel& model, const MapTerms& t, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& z) {
  const Eigen::MatrixXd& Y = model.snapshots();
  const Eigen::VectorXd c =
      t.beta.cwiseProduct(((Y.transpose() * z).array() - t.G.dot(z)).matrix()) / t.S;
  if (model.kernel().kind == KernelKind::gaussian) {
    const Eigen::VectorXd pc = t.phi.cwiseProduct(c);
    return (2.0 / model.kernel().sigma) * (Y * pc - y * pc.sum());
  }
  return Y * t.psi.cwiseProduct(c);
}

// (dG/dxi)^T z.
Eigen::VectorXd map_dxi_transpose_apply(const KpcaModel& model, const MapTerms& t, const Eigen::VectorXd& z) {
  const Eigen::VectorXd s =
      t.phi.cwiseProduct(((model.snapshots().transpose() * z).array() - t.G.dot(z)).matrix()) / t.S;
  return model.weight_map().transpose() * s;
}

void check_xi(const KpcaModel& model, const Eigen::VectorXd& xi) {
  if (!model.fitted()) throw InvalidArgument("KPCA model is not fitted");
  if (xi.size() != model.dimension()) {
    throw InvalidArgument("feature vector has length " + std::to_string(xi.size()) + ", expected " +
                          std::to_string(model.dimension()));
  }
  if (!xi.allFinite()) throw InvalidArgument("feature vector is not finite");
}

bool closed_form(const KpcaModel& model) { return model.kernel().polynomial_degree() == 1; }

}  // namespace

double kernel_eval(const Kernel& kernel, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw InvalidArgument("kernel arguments differ in length");
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("kernel arguments must be finite");
  return apply_kernel_to_products(kernel, x.dot(y), x.squaredNorm(), y.squaredNorm());
}

Eigen::MatrixXd gram_matrix(const Kernel& kernel, const Eigen::MatrixXd& Y) {
  kernel.validate();
  Eigen::MatrixXd G = Y.transpose() * Y;
  const Eigen::VectorXd n = G.diagonal();
  const Eigen::Index M = G.rows();
  for (Eigen::Index j = 0; j < M; ++j) {
    for (Eigen::Index i = 0; i < M; ++i) G(i, j) = apply_kernel_to_products(kernel, G(i, j), n[i], n[j]);
  }
  return G;
}

Eigen::MatrixXd center_gram(const Eigen::MatrixXd& K) {
  const Eigen::VectorXd col_mean = K.colwise().mean().transpose();
  const Eigen::VectorXd row_mean = K.rowwise().mean();
  const double all = K.mean();
  Eigen::MatrixXd Kc = K;
  Kc.colwise() -= row_mean;
  Kc.rowwise() -= col_mean.transpose();
  Kc.array() += all;
  return 0.5 * (Kc + Kc.transpose());
}

KpcaModel KpcaModel::fit(const Eigen::MatrixXd& Y, const Kernel& kernel, const DimensionSelection& selection) {
  kernel.validate();
  const Eigen::Index M = Y.cols();
  if (M < 2) throw InvalidArgument("KPCA needs at least two snapshots");
  if (!Y.allFinite()) throw InvalidArgument("snapshot matrix contains non-finite values");

  const Eigen::MatrixXd Kc = center_gram(gram_matrix(kernel, Y));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Kc / static_cast<double>(M));
  if (eig.info() != Eigen::Success) throw NumericalError("eigen-decomposition of the centered Gram matrix failed");

  const Eigen::VectorXd& ascending = eig.eigenvalues();
  const double lmax = ascending[M - 1];
  const double cutoff = std::max(0.0, 1e-12 * lmax);
  int positive = 0;
  while (positive < M && ascending[M - 1 - positive] > cutoff) ++positive;
  if (positive == 0) throw NumericalError("degenerate ensemble: centered Gram matrix has no positive eigenvalue");

  Eigen::VectorXd values(positive);
  Eigen::MatrixXd V(M, positive);
  for (int k = 0; k < positive; ++k) {
    values[k] = ascending[M - 1 - k];
    V.col(k) = eig.eigenvectors().col(M - 1 - k);
    Eigen::Index imax = 0;
    V.col(k).cwiseAbs().maxCoeff(&imax);
    if (V(imax, k) < 0.0) V.col(k) = -V.col(k);
  }

  int r = 0;
  if (selection.dimension) {
    r = *selection.dimension;
    if (r < 1 || r > positive) {
      throw InvalidArgument("retained dimension " + std::to_string(r) + " outside [1, " + std::to_string(positive) +
                            "] positive eigenvalues");
    }
  } else if (selection.energy_fraction) {
    const double f = *selection.energy_fraction;
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("energy fraction must lie in (0, 1)");
    const double total = values.sum();
    double acc = 0.0;
    while (r < positive) {
      acc += values[r++];
      if (acc >= f * total) break;
    }
  } else {
    throw InvalidArgument("dimension selection needs a dimension or an energy fraction");
  }
  return from_parts(Y, kernel, V, values, r);
}

KpcaModel KpcaModel::from_parts(const Eigen::MatrixXd& Y, const Kernel& kernel, const Eigen::MatrixXd& V,
                                const Eigen::VectorXd& eigenvalues, int dimension) {
  kernel.validate();
  if (V.rows() != Y.cols() || V.cols() != eigenvalues.size()) throw InvalidArgument("eigenpair shapes do not match");
  if (dimension < 1 || dimension > V.cols()) throw InvalidArgument("retained dimension out of range");
  KpcaModel m;
  m.kernel_ = kernel;
  m.Y_ = Y;
  m.V_ = V;
  m.eigenvalues_ = eigenvalues;
  m.r_ = dimension;
  m.finalize();
  return m;
}

void KpcaModel::finalize() {
  const Eigen::Index M = Y_.cols();
  YtY_ = Y_.transpose() * Y_;
  norms_sq_ = YtY_.diagonal();
  K_ = gram_matrix(kernel_, Y_);
  Kc_ = center_gram(K_);
  K_row_mean_ = K_.rowwise().mean();
  K_mean_ = K_.mean();
  const double sqrtM = std::sqrt(static_cast<double>(M));
  Xi_ = sqrtM * V_.leftCols(r_);
  // beta = (1/sqrt(M)) (I - 11^T/M) V_r xi + 1/M
  B_ = V_.leftCols(r_) / sqrtM;
  B_.rowwise() -= B_.colwise().mean();
}

Eigen::VectorXd KpcaModel::project(const Eigen::VectorXd& y) const {
  if (!fitted()) throw InvalidArgument("KPCA model is not fitted");
  if (y.size() != node_count()) throw InvalidArgument("snapshot length does not match the model");
  const Eigen::VectorXd a = Y_.transpose() * y;
  Eigen::VectorXd kv(a.size());
  const double yy = y.squaredNorm();
  for (Eigen::Index i = 0; i < a.size(); ++i) kv[i] = apply_kernel_to_products(kernel_, a[i], norms_sq_[i], yy);
  const Eigen::VectorXd kc = (kv - K_row_mean_).array() - kv.mean() + K_mean_;
  const double sqrtM = std::sqrt(static_cast<double>(realizations()));
  return (V_.leftCols(r_).transpose() * kc).cwiseQuotient(sqrtM * eigenvalues_.head(r_));
}

Eigen::MatrixXd feature_coordinates(const KpcaModel& model) {
  if (!model.fitted()) throw InvalidArgument("KPCA model is not fitted");
  return model.training_coordinates();
}

Eigen::VectorXd feature_weights(const KpcaModel& model, const Eigen::VectorXd& xi) {
  check_xi(model, xi);
  return (model.weight_map() * xi).array() + 1.0 / model.realizations();
}

std::vector<int> nearest_training_snapshots(const KpcaModel& model, const Eigen::VectorXd& xi) {
  const Eigen::VectorXd beta = feature_weights(model, xi);
  // |Phi(y_i) - Y_f|^2 up to a constant.
  const Eigen::VectorXd dist = model.gram().diagonal() - 2.0 * (model.gram() * beta);
  std::vector<int> order(static_cast<std::size_t>(dist.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });
  return order;
}

Eigen::VectorXd preimage_map(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& y) {
  const MapTerms t = map_terms(model, feature_weights(model, xi), y);
  if (!denominator_ok(t)) throw NumericalError("pre-image map denominator vanishes");
  return t.G;
}

PreimageResult preimage(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd* init,
                        const PreimageOptions& options) {
  const Eigen::VectorXd beta = feature_weights(model, xi);
  if (init && init->size() != model.node_count()) throw InvalidArgument("pre-image initial guess has wrong length");

  if (closed_form(model)) {
    PreimageResult out;
    out.y = model.snapshots() * beta / beta.sum();
    out.converged = true;
    return out;
  }

  std::vector<int> candidates;
  auto candidate = [&](std::size_t k) -> int {
    if (candidates.empty()) candidates = nearest_training_snapshots(model, xi);
    return k < candidates.size() ? candidates[k] : -1;
  };

  const int attempts = 1 + std::max(options.max_restarts, 0);
  std::size_t next_candidate = 0;
  std::string last_failure;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    PreimageResult out;
    out.restarts = attempt;
    if (attempt == 0 && init) {
      out.y = *init;
    } else {
      const int idx = candidate(next_candidate++);
      if (idx < 0) break;
      out.start_index = idx;
      out.y = model.snapshots().col(idx);
    }

    bool failed = false;
    for (int k = 0; k < options.max_iterations; ++k) {
      const MapTerms t = map_terms(model, beta, out.y);
      if (!denominator_ok(t) || !t.G.allFinite()) {
        failed = true;
        last_failure = denominator_ok(t) ? "non-finite iterate" : "vanishing denominator";
        break;
      }
      const double step = (t.G - out.y).norm();
      const double scale = 1.0 + out.y.norm();
      out.y = t.G;
      out.iterations = k + 1;
      if (step <= options.tolerance * scale) {
        out.converged = true;
        break;
      }
    }
    if (!failed) return out;
  }
  throw NumericalError("pre-image iteration failed after restarts: " + last_failure);
}

Eigen::MatrixXd preimage_jacobian(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& y_star) {
  const Eigen::VectorXd beta = feature_weights(model, xi);
  if (y_star.size() != model.node_count()) throw InvalidArgument("fixed point has wrong length");
  const MapTerms t = map_terms(model, beta, y_star);
  if (!denominator_ok(t)) throw NumericalError("pre-image map denominator vanishes at the fixed point");
  const Eigen::MatrixXd Gxi = map_dxi(model, t);
  if (closed_form(model)) return Gxi;

  const Eigen::Index n = model.node_count();
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - map_dy(model, t, y_star);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (!(lu.rcond() > 1e-12)) throw NumericalError("pre-image map is not differentiable here: I - dG/dy is singular");
  return lu.solve(Gxi);
}

Eigen::VectorXd preimage_vjp(const KpcaModel& model, const Eigen::VectorXd& xi, const Eigen::VectorXd& y_star,
                             const Eigen::VectorXd& v, JacobianSolver solver) {
  const Eigen::VectorXd beta = feature_weights(model, xi);
  const Eigen::Index n = model.node_count();
  if (y_star.size() != n || v.size() != n) throw InvalidArgument("vector length does not match the model");
  const MapTerms t = map_terms(model, beta, y_star);
  if (!denominator_ok(t)) throw NumericalError("pre-image map denominator vanishes at the fixed point");
  if (closed_form(model)) return map_dxi_transpose_apply(model, t, v);

  if (solver == JacobianSolver::automatic) solver = n <= 512 ? JacobianSolver::dense : JacobianSolver::krylov;

  Eigen::VectorXd z;
  if (solver == JacobianSolver::dense) {
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - map_dy(model, t, y_star).transpose();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    if (!(lu.rcond() > 1e-12)) throw NumericalError("pre-image map is not differentiable here: I - dG/dy is singular");
    z = lu.solve(v);
  } else {
    const detail::LinearOperator op(n, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return x - map_dy_transpose_apply(model, t, y_star, x);
    });
    Eigen::GMRES<detail::LinearOperator, Eigen::IdentityPreconditioner> gmres;
    gmres.set_restart(60);
    gmres.setMaxIterations(600);
    gmres.setTolerance(1e-12);
    gmres.compute(op);
    z = gmres.solve(v);
    if (gmres.info() != Eigen::Success || !z.allFinite()) {
      throw NumericalError("pre-image map is not differentiable here: adjoint Krylov solve did not converge");
    }
  }
  return map_dxi_transpose_apply(model, t, z);
}

}  // namespace stochinv
