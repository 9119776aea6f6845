#pragma once

#include <cmath>

#include "coap/error.hpp"
#include "coap/linalg.hpp"

namespace coap {

template <typename Scalar = double>
struct IdentifiedFactors {
  MatrixX<Scalar> H;           // n x q, H^T H / n = I, Z^T H = 0
  MatrixX<Scalar> B;           // p x q, B^T B diagonal decreasing
  MatrixX<Scalar> alpha_hat;   // d x q, projection of H on Z that was removed
  VectorX<Scalar> singular_values;
  bool degenerate = false;     // E B^T had fewer than q non-negligible singular values
};

/// Rotates (H, B) onto the identifiable representative: H minus its
/// projection on span(Z), then the SVD of E B^T split as sqrt(n) U and
/// D S / sqrt(n) with the first entry above 1e-8 in magnitude of each D
/// column made positive. H' B'^T = E B^T.
template <typename Scalar>
IdentifiedFactors<Scalar> enforce_identifiability(const MatrixX<Scalar>& H, const MatrixX<Scalar>& B,
                                                  const MatrixX<Scalar>& Z) {
  const Index n = H.rows(), q = H.cols(), p = B.rows();
  if (Z.rows() != n || B.cols() != q)
    throw Error(ErrorCode::DimensionMismatch, "enforce_identifiability: shapes do not conform");
  if (q > n || q > p)
    throw Error(ErrorCode::DimensionMismatch, "enforce_identifiability: q exceeds min(n, p)");

  Eigen::HouseholderQR<MatrixX<Scalar>> zqr(Z);
  const auto zdiag = zqr.matrixQR().diagonal().cwiseAbs();
  if (Z.cols() > n || !(zdiag.minCoeff() > Scalar(1e-12) * zdiag.maxCoeff()))
    throw Error(ErrorCode::RankDeficientCovariates, "rank(Z) < d");

  IdentifiedFactors<Scalar> out;
  out.alpha_hat = zqr.solve(H);
  MatrixX<Scalar> E = H;
  E.noalias() -= Z * out.alpha_hat;
  // Second Gram-Schmidt pass against Z.
  const MatrixX<Scalar> correction = zqr.solve(E);
  E.noalias() -= Z * correction;
  out.alpha_hat += correction;

  // E B^T = (Qe Re)(Qb Rb)^T = Qe (Re Rb^T) Qb^T; only the q x q core needs an SVD.
  Eigen::HouseholderQR<MatrixX<Scalar>> eqr(E), bqr(B);
  const MatrixX<Scalar> qe = eqr.householderQ() * MatrixX<Scalar>::Identity(n, q);
  const MatrixX<Scalar> qb = bqr.householderQ() * MatrixX<Scalar>::Identity(p, q);
  const MatrixX<Scalar> re = eqr.matrixQR().topRows(q).template triangularView<Eigen::Upper>();
  const MatrixX<Scalar> rb = bqr.matrixQR().topRows(q).template triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<MatrixX<Scalar>> core(re * rb.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);

  MatrixX<Scalar> U = qe * core.matrixU();
  MatrixX<Scalar> D = qb * core.matrixV();
  const VectorX<Scalar> signs = linalg::first_nonzero_positive(D, Scalar(1e-8));
  U *= signs.asDiagonal();

  out.singular_values = core.singularValues();
  const Scalar s1 = out.singular_values.size() ? out.singular_values(0) : Scalar(0);
  out.degenerate = !(s1 > 0) || out.singular_values(q - 1) <= Scalar(1e-12) * s1;

  const Scalar root_n = std::sqrt(static_cast<Scalar>(n));
  out.H = root_n * U;
  out.B = D * out.singular_values.asDiagonal() / root_n;
  return out;
}

}  // namespace coap
