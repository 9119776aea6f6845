#pragma once

#include "coap/error.hpp"
#include "coap/linalg.hpp"
#include "coap/model.hpp"

namespace coap {

/// Floor applied to every varsigma update.
inline constexpr double kVarsigmaFloor = 1e-6;

/// Loadings update: b_j = (H^T H)^{-1} sum_i h_i (mu_ij - z_i^T beta_j).
template <typename Scalar, typename DerivedZ>
MatrixX<Scalar> update_loadings(const VariationalParams<Scalar>& gamma,
                                const ModelParams<Scalar>& params,
                                const Eigen::MatrixBase<DerivedZ>& Z) {
  const auto& H = params.H;
  if (H.rows() != gamma.mu.rows() || params.beta.rows() != gamma.mu.cols() ||
      params.beta.cols() != Z.cols() || Z.rows() != gamma.mu.rows())
    throw Error(ErrorCode::DimensionMismatch, "update_loadings: shapes do not conform");
  MatrixX<Scalar> resid = gamma.mu;
  resid.noalias() -= Z * params.beta.transpose();
  MatrixX<Scalar> gram = H.transpose() * H;
  MatrixX<Scalar> rhs = H.transpose() * resid;  // q x p
  return linalg::ridge_spd_solve<Scalar>(std::move(gram), rhs, ErrorCode::SingularGram).transpose();
}

/// Factor update: h_i = (B^T S^{-1} B)^{-1} sum_j b_j (mu_ij - z_i^T beta_j) / varsigma_j.
template <typename Scalar, typename DerivedZ>
MatrixX<Scalar> update_factors(const VariationalParams<Scalar>& gamma,
                               const ModelParams<Scalar>& params,
                               const Eigen::MatrixBase<DerivedZ>& Z) {
  const auto& B = params.B;
  if (B.rows() != gamma.mu.cols() || params.varsigma.size() != gamma.mu.cols() ||
      params.beta.cols() != Z.cols() || Z.rows() != gamma.mu.rows())
    throw Error(ErrorCode::DimensionMismatch, "update_factors: shapes do not conform");
  MatrixX<Scalar> resid = gamma.mu;
  resid.noalias() -= Z * params.beta.transpose();
  const MatrixX<Scalar> weighted_B = params.varsigma.cwiseInverse().asDiagonal() * B;  // p x q
  MatrixX<Scalar> gram = B.transpose() * weighted_B;
  MatrixX<Scalar> rhs = weighted_B.transpose() * resid.transpose();  // q x n
  return linalg::ridge_spd_solve<Scalar>(std::move(gram), rhs, ErrorCode::SingularGram).transpose();
}

/// Working response Ytilde = mu - H B^T.
template <typename Scalar>
MatrixX<Scalar> working_response(const VariationalParams<Scalar>& gamma,
                                 const ModelParams<Scalar>& params) {
  MatrixX<Scalar> y = gamma.mu;
  y.noalias() -= params.H * params.B.transpose();
  return y;
}

/// varsigma_j = (1/n) [ sum_i (Ytilde_ij - z_i^T beta_j)^2 + sum_i sigma2_ij ].
template <typename Scalar, typename DerivedZ>
VectorX<Scalar> residual_varsigma(const MatrixX<Scalar>& y_tilde,
                                  const Eigen::MatrixBase<DerivedZ>& Z,
                                  const MatrixX<Scalar>& sigma2, const MatrixX<Scalar>& beta) {
  if (beta.rows() != y_tilde.cols() || beta.cols() != Z.cols() || sigma2.rows() != y_tilde.rows() ||
      sigma2.cols() != y_tilde.cols())
    throw Error(ErrorCode::DimensionMismatch, "varsigma update: shapes do not conform");
  MatrixX<Scalar> resid = y_tilde;
  resid.noalias() -= Z * beta.transpose();
  const Scalar n = static_cast<Scalar>(y_tilde.rows());
  VectorX<Scalar> vs = (resid.array().square().colwise().sum() + sigma2.array().colwise().sum())
                           .transpose()
                           .matrix() /
                       n;
  return vs.cwiseMax(Scalar(kVarsigmaFloor));
}

template <typename Scalar, typename DerivedZ>
VectorX<Scalar> update_varsigma(const VariationalParams<Scalar>& gamma,
                                const ModelParams<Scalar>& params,
                                const Eigen::MatrixBase<DerivedZ>& Z, const MatrixX<Scalar>& beta) {
  return residual_varsigma(working_response(gamma, params), Z, gamma.sigma2, beta);
}

}  // namespace coap
