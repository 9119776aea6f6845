#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "coap/error.hpp"
#include "coap/linalg.hpp"
#include "coap/model.hpp"
#include "coap/mstep.hpp"

// Rank-constrained updates of the coefficient matrix beta (p x d).
//
// Both updates share the same structure: with btilde the unconstrained
// multiresponse least-squares coefficient of Ytilde on Z and S a p x p
// positive definite metric, the maximizer is
//
//   beta = S^{1/2} V V^T S^{-1/2} btilde,
//
// where V holds the top-r left singular vectors of S^{-1/2} btilde (Z^T Z / n)^{1/2}.
// The separate update uses S = diag(varsigma); the joint update uses the
// full residual covariance Sigma-tilde.

namespace coap {

/// btilde = Ytilde^T Z (Z^T Z)^{-1}, computed through a QR factorization of Z.
template <typename Scalar, typename DerivedZ>
MatrixX<Scalar> least_squares_coefficient(const MatrixX<Scalar>& y_tilde,
                                          const Eigen::MatrixBase<DerivedZ>& Z) {
  if (Z.rows() != y_tilde.rows())
    throw Error(ErrorCode::DimensionMismatch, "least squares: row counts differ");
  Eigen::HouseholderQR<MatrixX<Scalar>> qr(Z.derived());
  const auto diag = qr.matrixQR().diagonal().cwiseAbs();
  if (Z.cols() > Z.rows() || diag.size() == 0 ||
      !(diag.minCoeff() > Scalar(1e-12) * diag.maxCoeff()))
    throw Error(ErrorCode::SingularCovariateGram, "Z^T Z is numerically singular");
  return qr.solve(y_tilde).transpose();
}

/// (Z^T Z / n)^{1/2}
template <typename DerivedZ>
MatrixX<typename DerivedZ::Scalar> covariate_gram_sqrt(const Eigen::MatrixBase<DerivedZ>& Z) {
  using Scalar = typename DerivedZ::Scalar;
  MatrixX<Scalar> gram = Z.transpose() * Z;
  gram /= static_cast<Scalar>(Z.rows());
  return linalg::sym_sqrt(gram);
}

/// Rank-r projection of btilde under the diagonal metric diag(varsigma).
template <typename Scalar, typename DerivedZ>
MatrixX<Scalar> project_to_rank(const MatrixX<Scalar>& beta_tilde,
                                const Eigen::MatrixBase<DerivedZ>& Z,
                                const VectorX<Scalar>& varsigma, Index r,
                                std::uint64_t seed = 0) {
  if (beta_tilde.rows() != varsigma.size() || beta_tilde.cols() != Z.cols())
    throw Error(ErrorCode::DimensionMismatch, "project_to_rank: shapes do not conform");
  if (r < 1) throw Error(ErrorCode::RankTooLarge, "rank must be at least one");
  if (r >= std::min(beta_tilde.rows(), beta_tilde.cols())) return beta_tilde;
  const VectorX<Scalar> sd = varsigma.cwiseSqrt();
  const VectorX<Scalar> inv_sd = sd.cwiseInverse();
  const MatrixX<Scalar> scaled = inv_sd.asDiagonal() * beta_tilde;  // S^{-1/2} btilde
  const MatrixX<Scalar> a_bar = scaled * covariate_gram_sqrt(Z);
  const MatrixX<Scalar> V = linalg::truncated_svd<Scalar>(a_bar, r, seed).U;
  MatrixX<Scalar> proj = V * (V.transpose() * scaled);
  return sd.asDiagonal() * proj;
}

/// Separate update for fixed varsigma; global maximizer of
/// -Tr{ S^{-1} (1/n) (Ytilde^T - beta Z^T)(.)^T } subject to rank(beta) <= r.
template <typename Scalar, typename DerivedZ>
MatrixX<Scalar> separate_lowrank_beta(const MatrixX<Scalar>& y_tilde,
                                      const Eigen::MatrixBase<DerivedZ>& Z,
                                      const VectorX<Scalar>& varsigma, Index r,
                                      std::uint64_t seed = 0) {
  if (!(varsigma.array() > Scalar(0)).all())
    throw Error(ErrorCode::NonPositiveVariance, "varsigma must be strictly positive");
  return project_to_rank(least_squares_coefficient(y_tilde, Z), Z, varsigma, r, seed);
}

template <typename Scalar, typename DerivedZ>
MatrixX<Scalar> update_beta_separate(const VariationalParams<Scalar>& gamma,
                                     const ModelParams<Scalar>& params,
                                     const Eigen::MatrixBase<DerivedZ>& Z, Index r,
                                     std::uint64_t seed = 0) {
  return separate_lowrank_beta(working_response(gamma, params), Z, params.varsigma, r, seed);
}

template <typename Scalar>
struct JointUpdate {
  MatrixX<Scalar> beta;
  VectorX<Scalar> varsigma;
};

/// Joint update of (beta, varsigma) using the full residual covariance
///   Sigma-tilde = (1/n) { (Ytilde^T - btilde Z^T)(.)^T + sum_i Sigma_i }
/// as the projection metric.
template <typename Scalar, typename DerivedZ>
JointUpdate<Scalar> joint_lowrank_beta_varsigma(const MatrixX<Scalar>& y_tilde,
                                                const Eigen::MatrixBase<DerivedZ>& Z,
                                                const MatrixX<Scalar>& sigma2, Index r,
                                                std::uint64_t seed = 0) {
  const Index n = y_tilde.rows(), p = y_tilde.cols(), d = Z.cols();
  if (n <= d) throw Error(ErrorCode::SingularSigmaTilde, "joint update requires n > d");
  if (r < 1) throw Error(ErrorCode::RankTooLarge, "rank must be at least one");
  const MatrixX<Scalar> beta_tilde = least_squares_coefficient(y_tilde, Z);
  if (r >= std::min(p, d)) return {beta_tilde, residual_varsigma(y_tilde, Z, sigma2, beta_tilde)};

  MatrixX<Scalar> resid = y_tilde;
  resid.noalias() -= Z * beta_tilde.transpose();
  MatrixX<Scalar> sigma_tilde = resid.transpose() * resid;
  sigma_tilde.diagonal() += sigma2.colwise().sum().transpose();
  sigma_tilde /= static_cast<Scalar>(n);

  const MatrixX<Scalar> inv_sqrt = linalg::sym_inv_sqrt(sigma_tilde, ErrorCode::SingularSigmaTilde);
  const MatrixX<Scalar> fwd_sqrt = linalg::sym_sqrt(sigma_tilde);
  const MatrixX<Scalar> scaled = inv_sqrt * beta_tilde;
  const MatrixX<Scalar> a_bar = scaled * covariate_gram_sqrt(Z);
  const MatrixX<Scalar> V = linalg::truncated_svd<Scalar>(a_bar, r, seed).U;
  MatrixX<Scalar> beta = fwd_sqrt * (V * (V.transpose() * scaled));
  VectorX<Scalar> vs = residual_varsigma(y_tilde, Z, sigma2, beta);
  return {std::move(beta), std::move(vs)};
}

template <typename Scalar, typename DerivedZ>
JointUpdate<Scalar> update_beta_varsigma_joint(const VariationalParams<Scalar>& gamma,
                                               const ModelParams<Scalar>& params,
                                               const Eigen::MatrixBase<DerivedZ>& Z, Index r,
                                               std::uint64_t seed = 0) {
  return joint_lowrank_beta_varsigma(working_response(gamma, params), Z, gamma.sigma2, r, seed);
}

/// Separate-update objective: -(1/n) sum_ij (Ytilde_ij - z_i^T beta_j)^2 / varsigma_j.
template <typename Scalar, typename DerivedZ>
Scalar separate_objective(const MatrixX<Scalar>& y_tilde, const Eigen::MatrixBase<DerivedZ>& Z,
                          const MatrixX<Scalar>& beta, const VectorX<Scalar>& varsigma) {
  MatrixX<Scalar> resid = y_tilde;
  resid.noalias() -= Z * beta.transpose();
  const Scalar total =
      (resid.array().square().rowwise() * varsigma.cwiseInverse().transpose().array()).sum();
  return -total / static_cast<Scalar>(y_tilde.rows());
}

/// Joint objective (n/2) [ ln|S^{-1}| - Tr{S^{-1} W(beta)} ] for S = diag(varsigma).
template <typename Scalar, typename DerivedZ>
Scalar joint_objective(const MatrixX<Scalar>& y_tilde, const Eigen::MatrixBase<DerivedZ>& Z,
                       const MatrixX<Scalar>& sigma2, const MatrixX<Scalar>& beta,
                       const VectorX<Scalar>& varsigma) {
  const Scalar n = static_cast<Scalar>(y_tilde.rows());
  MatrixX<Scalar> resid = y_tilde;
  resid.noalias() -= Z * beta.transpose();
  const VectorX<Scalar> w_diag =
      (resid.array().square().colwise().sum() + sigma2.array().colwise().sum()).transpose().matrix() / n;
  const Scalar log_det = -varsigma.array().log().sum();
  const Scalar trace = (w_diag.array() / varsigma.array()).sum();
  return n / Scalar(2) * (log_det - trace);
}

}  // namespace coap
