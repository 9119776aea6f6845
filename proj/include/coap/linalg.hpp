#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include "coap/error.hpp"

namespace coap {

using Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace linalg {

/// Above this min(rows, cols) the truncated SVD switches to a randomized
/// range finder.
inline constexpr Index kExactSvdLimit = 200;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

/// Solves G X = rhs for symmetric positive (semi)definite G. The factorization
/// uses G plus a ridge of rel_ridge * trace(G) / dim on the diagonal; one step
/// of iterative refinement against G itself then removes the ridge bias to
/// second order.
template <typename Scalar, typename Rhs>
MatrixX<Scalar> ridge_spd_solve(MatrixX<Scalar> gram, const Eigen::MatrixBase<Rhs>& rhs,
                                ErrorCode on_failure, Scalar rel_ridge = Scalar(1e-10)) {
  const Index dim = gram.rows();
  const Scalar ridge = rel_ridge * gram.trace() / static_cast<Scalar>(dim);
  MatrixX<Scalar> guarded = gram;
  guarded.diagonal().array() += ridge;
  Eigen::LLT<MatrixX<Scalar>> llt(guarded);
  if (llt.info() != Eigen::Success || !(gram.trace() > Scalar(0)))
    throw Error(on_failure, "Gram matrix is numerically singular");
  MatrixX<Scalar> out = llt.solve(rhs.derived());
  MatrixX<Scalar> resid = rhs.derived();
  resid.noalias() -= gram * out;
  out += llt.solve(resid);
  if (!all_finite(out)) throw Error(on_failure, "Gram solve produced non-finite values");
  return out;
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
/// Negative round-off eigenvalues are clamped to zero.
template <typename Scalar>
MatrixX<Scalar> sym_sqrt(const MatrixX<Scalar>& a) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(a);
  VectorX<Scalar> ev = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Inverse symmetric square root; throws on_failure if a is not positive definite.
template <typename Scalar>
MatrixX<Scalar> sym_inv_sqrt(const MatrixX<Scalar>& a, ErrorCode on_failure) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(a);
  const VectorX<Scalar>& ev = es.eigenvalues();
  if (es.info() != Eigen::Success || !(ev.minCoeff() > Scalar(0)) ||
      ev.minCoeff() <= std::numeric_limits<Scalar>::epsilon() * ev.maxCoeff())
    throw Error(on_failure, "matrix is not numerically positive definite");
  VectorX<Scalar> inv = ev.cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

template <typename Scalar>
struct TruncatedSvd {
  MatrixX<Scalar> U;  // rows x k
  VectorX<Scalar> s;  // k, decreasing
  MatrixX<Scalar> V;  // cols x k
};

template <typename Scalar>
TruncatedSvd<Scalar> exact_truncated_svd(const MatrixX<Scalar>& a, Index k) {
  Eigen::BDCSVD<MatrixX<Scalar>> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  k = std::min<Index>(k, svd.singularValues().size());
  return {svd.matrixU().leftCols(k), svd.singularValues().head(k), svd.matrixV().leftCols(k)};
}

/// Randomized range finder with power iterations followed by an exact SVD of
/// the projected matrix. Deterministic for a fixed seed.
template <typename Scalar>
TruncatedSvd<Scalar> randomized_svd(const MatrixX<Scalar>& a, Index k, std::uint64_t seed,
                                    Index oversample = 10, int power_iters = 4) {
  const Index l = std::min<Index>(k + oversample, std::min(a.rows(), a.cols()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixX<Scalar> omega(a.cols(), l);
  for (Index j = 0; j < l; ++j)
    for (Index i = 0; i < a.cols(); ++i) omega(i, j) = static_cast<Scalar>(normal(rng));

  auto orthonormalize = [l](const MatrixX<Scalar>& y) {
    Eigen::HouseholderQR<MatrixX<Scalar>> qr(y);
    return MatrixX<Scalar>(qr.householderQ() * MatrixX<Scalar>::Identity(y.rows(), l));
  };
  MatrixX<Scalar> q = orthonormalize(a * omega);
  for (int it = 0; it < power_iters; ++it) {
    MatrixX<Scalar> w = orthonormalize(a.transpose() * q);
    q = orthonormalize(a * w);
  }
  MatrixX<Scalar> small = q.transpose() * a;
  TruncatedSvd<Scalar> inner = exact_truncated_svd<Scalar>(small, k);
  return {q * inner.U, inner.s, inner.V};
}

/// Top-k singular triplets; exact below kExactSvdLimit, randomized above.
template <typename Scalar>
TruncatedSvd<Scalar> truncated_svd(const MatrixX<Scalar>& a, Index k, std::uint64_t seed = 0) {
  if (std::min(a.rows(), a.cols()) > kExactSvdLimit && k < std::min(a.rows(), a.cols()) / 2)
    return randomized_svd<Scalar>(a, k, seed);
  return exact_truncated_svd<Scalar>(a, k);
}

template <typename Derived>
VectorX<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Eigen::BDCSVD<MatrixX<Scalar>> svd(a.derived().eval());
  return svd.singularValues();
}

/// Number of singular values above rel_tol times the largest one.
template <typename Derived>
Index numerical_rank(const Eigen::MatrixBase<Derived>& a, typename Derived::Scalar rel_tol) {
  auto s = singular_values(a);
  if (s.size() == 0 || !(s(0) > 0)) return 0;
  return (s.array() > rel_tol * s(0)).count();
}

/// Sign flip making the first entry of each column exceeding tol in magnitude
/// positive. Returns the applied signs.
template <typename Scalar>
VectorX<Scalar> first_nonzero_positive(MatrixX<Scalar>& m, Scalar tol = Scalar(1e-8)) {
  VectorX<Scalar> signs = VectorX<Scalar>::Ones(m.cols());
  for (Index k = 0; k < m.cols(); ++k) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, k)) > tol) {
        if (m(i, k) < 0) {
          m.col(k) *= Scalar(-1);
          signs(k) = Scalar(-1);
        }
        break;
      }
    }
  }
  return signs;
}

}  // namespace linalg
}  // namespace coap
