#pragma once

#include <cmath>
#include <vector>

#include "coap/error.hpp"
#include "coap/linalg.hpp"

namespace coap {

struct EvalSummary {
  double tr_H = 0;
  double tr_B = 0;
  double ea_beta = 0;           // Frobenius
  double ea_beta_col1 = 0;      // Euclidean, first (intercept) column
  double ea_beta_rms = 0;       // Frobenius / sqrt(p d)
  double ea_beta_col1_rms = 0;  // Euclidean / sqrt(p)
};

/// Tr{ H0^T P(H_hat) H0 } / Tr(H0^T H0), where P(H_hat) is the orthogonal
/// projector onto the column space of H_hat. Lies in [0, 1].
template <typename DerivedA, typename DerivedB>
double trace_statistic(const Eigen::MatrixBase<DerivedA>& estimate,
                       const Eigen::MatrixBase<DerivedB>& truth) {
  using Scalar = typename DerivedA::Scalar;
  if (estimate.rows() != truth.rows())
    throw Error(ErrorCode::DimensionMismatch, "trace_statistic: row counts differ");
  if (estimate.cols() == 0 || estimate.cols() > estimate.rows())
    throw Error(ErrorCode::RankDeficientEstimate, "estimate has no room for full column rank");
  Eigen::HouseholderQR<MatrixX<Scalar>> qr(estimate.derived());
  const auto rdiag = qr.matrixQR().diagonal().cwiseAbs();
  if (!(rdiag.minCoeff() > Scalar(1e-10) * rdiag.maxCoeff()))
    throw Error(ErrorCode::RankDeficientEstimate, "estimate is not of full column rank");
  const MatrixX<Scalar> Q = qr.householderQ() * MatrixX<Scalar>::Identity(estimate.rows(), estimate.cols());
  const double denom = static_cast<double>(truth.squaredNorm());
  if (!(denom > 0)) throw Error(ErrorCode::RankDeficientEstimate, "reference matrix is zero");
  const double num = static_cast<double>((Q.transpose() * truth).squaredNorm());
  return num / denom;
}

/// Frobenius norm of beta_hat - beta0.
template <typename DerivedA, typename DerivedB>
double estimation_accuracy(const Eigen::MatrixBase<DerivedA>& estimate,
                           const Eigen::MatrixBase<DerivedB>& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw Error(ErrorCode::DimensionMismatch, "estimation_accuracy: shapes differ");
  return static_cast<double>((estimate - truth).norm());
}

/// Frobenius error relative to the Frobenius norm of the truth.
template <typename DerivedA, typename DerivedB>
double relative_estimation_accuracy(const Eigen::MatrixBase<DerivedA>& estimate,
                                    const Eigen::MatrixBase<DerivedB>& truth) {
  const double scale = static_cast<double>(truth.norm());
  if (!(scale > 0)) throw Error(ErrorCode::DimensionMismatch, "reference coefficient is zero");
  return estimation_accuracy(estimate, truth) / scale;
}

/// Frobenius error divided by sqrt(number of entries), i.e. the root mean
/// squared entrywise error.
template <typename DerivedA, typename DerivedB>
double rms_estimation_accuracy(const Eigen::MatrixBase<DerivedA>& estimate,
                               const Eigen::MatrixBase<DerivedB>& truth) {
  const double err = estimation_accuracy(estimate, truth);
  return truth.size() ? err / std::sqrt(static_cast<double>(truth.size())) : 0.0;
}

template <typename Scalar>
EvalSummary evaluate(const MatrixX<Scalar>& H_hat, const MatrixX<Scalar>& B_hat,
                     const MatrixX<Scalar>& beta_hat, const MatrixX<Scalar>& H0,
                     const MatrixX<Scalar>& B0, const MatrixX<Scalar>& beta0) {
  EvalSummary out;
  out.tr_H = trace_statistic(H_hat, H0);
  out.tr_B = trace_statistic(B_hat, B0);
  out.ea_beta = estimation_accuracy(beta_hat, beta0);
  out.ea_beta_rms = rms_estimation_accuracy(beta_hat, beta0);
  if (beta0.cols() > 0) {
    out.ea_beta_col1 = estimation_accuracy(beta_hat.col(0), beta0.col(0));
    out.ea_beta_col1_rms = rms_estimation_accuracy(beta_hat.col(0), beta0.col(0));
  }
  return out;
}

struct MeanSd {
  double mean = 0;
  double sd = 0;  // sample standard deviation; 0 for a single value
};

inline MeanSd mean_sd(const std::vector<double>& values) {
  MeanSd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

}  // namespace coap
