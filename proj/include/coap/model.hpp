#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "coap/error.hpp"
#include "coap/linalg.hpp"

namespace coap {

/// Observed counts X (n x p), covariates Z (n x d, intercept first) and
/// per-sample offsets a (n). Counts are held as reals.
template <typename Scalar = double>
struct CountDataset {
  MatrixX<Scalar> X;
  MatrixX<Scalar> Z;
  VectorX<Scalar> a;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  Index d() const { return Z.cols(); }
};

/// Model parameters theta = (beta, B, H, varsigma).
template <typename Scalar = double>
struct ModelParams {
  MatrixX<Scalar> beta;      // p x d
  MatrixX<Scalar> B;         // p x q
  MatrixX<Scalar> H;         // n x q
  VectorX<Scalar> varsigma;  // p
};

/// Mean-field Gaussian posterior over the latent log-rates.
template <typename Scalar = double>
struct VariationalParams {
  MatrixX<Scalar> mu;      // n x p
  MatrixX<Scalar> sigma2;  // n x p
};

struct FitConfig {
  int q = 5;
  int r = 6;
  int max_iter = 50;
  double eps_elbo = 1e-5;
  bool joint_beta_update = false;
  std::uint64_t seed = 1;
  bool deterministic_reductions = true;
  /// Exponent arguments are clipped to [-exp_clip, exp_clip].
  double exp_clip = 30.0;
  /// Relative-change stopping is measured on the ELBO with the data-only
  /// constant -sum ln(x!) + np/2 added back. When false, the dropped-constant
  /// value is used, which is an order of magnitude or more larger for big counts
  /// and stops the loop early.
  bool stop_on_complete_elbo = true;
};

/// Handle returned by validate_inputs. Borrows the dataset, which must
/// outlive it.
template <typename Scalar = double>
class ValidatedProblem {
 public:
  const CountDataset<Scalar>& data() const { return *data_; }
  const FitConfig& config() const { return config_; }

 private:
  template <typename S>
  friend ValidatedProblem<S> validate_inputs(const CountDataset<S>&, const FitConfig&);

  ValidatedProblem(const CountDataset<Scalar>& data, FitConfig config)
      : data_(&data), config_(config) {}

  const CountDataset<Scalar>* data_;
  FitConfig config_;
};

/// Relative singular-value tolerance for the rank(Z) = d check.
inline constexpr double kCovariateRankTol = 1e-10;

template <typename Scalar>
void validate_dataset(const CountDataset<Scalar>& data) {
  const Index n = data.X.rows(), p = data.X.cols();
  if (n == 0 || p == 0) throw Error(ErrorCode::DimensionMismatch, "X is empty");
  if (data.Z.rows() != n)
    throw Error(ErrorCode::DimensionMismatch, "Z must have as many rows as X");
  if (data.Z.cols() == 0) throw Error(ErrorCode::DimensionMismatch, "Z has no columns");
  if (data.a.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "offset vector length must equal rows of X");

  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) {
      const Scalar x = data.X(i, j);
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, "X contains a non-finite entry");
      if (x < 0)
        throw Error(ErrorCode::NegativeCount,
                    "X(" + std::to_string(i) + "," + std::to_string(j) + ") is negative");
      if (x != std::floor(x))
        throw Error(ErrorCode::NonIntegerCount,
                    "X(" + std::to_string(i) + "," + std::to_string(j) + ") is not an integer");
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (!(data.a(i) > 0) || !std::isfinite(data.a(i)))
      throw Error(ErrorCode::NonPositiveOffset, "offset a(" + std::to_string(i) + ") must be > 0");
  }
  if (!linalg::all_finite(data.Z)) throw Error(ErrorCode::NonFiniteValue, "Z contains a non-finite entry");
  if (!(data.Z.col(0).array() == Scalar(1)).all())
    throw Error(ErrorCode::MissingIntercept, "first column of Z must be all ones");
  if (data.Z.cols() > n ||
      linalg::numerical_rank(data.Z, Scalar(kCovariateRankTol)) < data.Z.cols())
    throw Error(ErrorCode::RankDeficientCovariates, "rank(Z) < d");
}

inline void validate_config(const FitConfig& config, Index n, Index p, Index d) {
  if (config.q < 1 || config.q >= std::min(n, p))
    throw Error(ErrorCode::FactorCountTooLarge,
                "q must satisfy 1 <= q < min(n, p) = " + std::to_string(std::min(n, p)));
  if (config.r < 1 || config.r > std::min(p, d))
    throw Error(ErrorCode::RankTooLarge,
                "r must satisfy 1 <= r <= min(p, d) = " + std::to_string(std::min(p, d)));
  if (config.max_iter < 1) throw Error(ErrorCode::InvalidConfig, "max_iter must be positive");
  if (!(config.eps_elbo > 0)) throw Error(ErrorCode::InvalidConfig, "eps_elbo must be positive");
  if (!(config.exp_clip > 0)) throw Error(ErrorCode::InvalidConfig, "exp_clip must be positive");
}

template <typename Scalar>
ValidatedProblem<Scalar> validate_inputs(const CountDataset<Scalar>& data, const FitConfig& config) {
  validate_dataset(data);
  validate_config(config, data.n(), data.p(), data.d());
  return ValidatedProblem<Scalar>(data, config);
}

/// L = Z beta^T + H B^T, the log-rate mean without overdispersion noise.
template <typename Scalar, typename DerivedZ>
MatrixX<Scalar> linear_predictor(const ModelParams<Scalar>& params,
                                 const Eigen::MatrixBase<DerivedZ>& Z) {
  if (params.beta.cols() != Z.cols() || params.H.rows() != Z.rows() ||
      params.B.cols() != params.H.cols() || params.B.rows() != params.beta.rows())
    throw Error(ErrorCode::DimensionMismatch, "linear_predictor: parameter shapes do not conform");
  const MatrixX<Scalar> covariate_part = Z * params.beta.transpose();
  const MatrixX<Scalar> factor_part = params.H * params.B.transpose();
  return covariate_part + factor_part;
}

}  // namespace coap
