#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "coap/error.hpp"
#include "coap/linalg.hpp"
#include "coap/model.hpp"

// Synthetic count data with known ground truth.
//
// Random streams (std::mt19937_64 seeded through std::seed_seq):
//   fixed stream      keyed by (p, d, q0, r0, rho_z, rho_B); draws U1, V1 and
//                     the raw loading matrix in that order, so beta0 and B0
//                     stay the same across replicate seeds and noise levels.
//   replicate stream  keyed by (n, p, d, q0, r0, seed); draws the covariates,
//                     the raw factors, the Gaussian noise and the Poisson counts
//                     in that order.
// Matrices are filled column by column.

namespace coap {

enum class OffsetMode {
  Constant,  // a_i = a_value for all i
  RowSum,    // counts drawn with a_i = 1; offsets set to row sum / median row sum
};

struct ScenarioSpec {
  Index n = 100;
  Index p = 200;
  Index d = 50;
  Index q0 = 5;
  Index r0 = 6;
  double rho_z = 6.0;
  double rho_B = 3.0;
  double sigma2 = 1.0;
  OffsetMode offset = OffsetMode::Constant;
  double a_value = 1.0;
  std::uint64_t seed = 1;
};

template <typename Scalar = double>
struct SyntheticDataset {
  CountDataset<Scalar> data;
  MatrixX<Scalar> beta0;  // p x d
  MatrixX<Scalar> H0;     // n x q0
  MatrixX<Scalar> B0;     // p x q0
};

/// Poisson means above this are sampled from a rounded normal approximation.
inline constexpr double kPoissonNormalCutover = 1e7;

/// AR(1) correlation matrix, entry (i, j) = rho^|i - j|.
template <typename Scalar = double>
MatrixX<Scalar> ar1_covariance(Index dim, Scalar rho) {
  if (dim < 0 || !(std::abs(rho) < Scalar(1)))
    throw Error(ErrorCode::InvalidSpec, "ar1_covariance requires dim >= 0 and |rho| < 1");
  MatrixX<Scalar> c(dim, dim);
  for (Index j = 0; j < dim; ++j)
    for (Index i = 0; i < dim; ++i) c(i, j) = std::pow(rho, static_cast<Scalar>(std::abs(i - j)));
  return c;
}

inline void validate_spec(const ScenarioSpec& s) {
  auto fail = [](const char* msg) { throw Error(ErrorCode::InvalidSpec, msg); };
  if (s.n < 1 || s.p < 1 || s.d < 1 || s.q0 < 1 || s.r0 < 1) fail("dimensions must be positive");
  if (s.q0 >= std::min(s.n, s.p)) fail("q0 must be below min(n, p)");
  if (s.r0 > std::min(s.p, s.d)) fail("r0 must not exceed min(p, d)");
  if (s.n < s.d + s.q0) fail("n must be at least d + q0");
  if (!(s.rho_z >= 0) || !(s.rho_B >= 0) || !std::isfinite(s.rho_z) || !std::isfinite(s.rho_B))
    fail("signal scales must be finite and nonnegative");
  if (!(s.sigma2 >= 0) || !std::isfinite(s.sigma2)) fail("sigma2 must be finite and nonnegative");
  if (s.offset == OffsetMode::Constant && !(s.a_value > 0 && std::isfinite(s.a_value)))
    fail("a_value must be positive");
}

namespace detail {

inline void push_u64(std::vector<std::uint32_t>& v, std::uint64_t x) {
  v.push_back(static_cast<std::uint32_t>(x & 0xffffffffu));
  v.push_back(static_cast<std::uint32_t>(x >> 32));
}

inline std::mt19937_64 fixed_stream(const ScenarioSpec& s) {
  std::vector<std::uint32_t> key{0x46495844u};  // "FIXD"
  for (Index v : {s.p, s.d, s.q0, s.r0}) push_u64(key, static_cast<std::uint64_t>(v));
  push_u64(key, std::bit_cast<std::uint64_t>(s.rho_z));
  push_u64(key, std::bit_cast<std::uint64_t>(s.rho_B));
  std::seed_seq seq(key.begin(), key.end());
  return std::mt19937_64(seq);
}

inline std::mt19937_64 replicate_stream(const ScenarioSpec& s) {
  std::vector<std::uint32_t> key{0x5245504cu};  // "REPL"
  for (Index v : {s.n, s.p, s.d, s.q0, s.r0}) push_u64(key, static_cast<std::uint64_t>(v));
  push_u64(key, s.seed);
  std::seed_seq seq(key.begin(), key.end());
  return std::mt19937_64(seq);
}

template <typename Scalar>
MatrixX<Scalar> standard_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixX<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(normal(rng));
  return m;
}

/// Rows distributed N(0, ar1(dim, 0.5)).
template <typename Scalar>
MatrixX<Scalar> correlated_rows(Index rows, Index dim, std::mt19937_64& rng) {
  if (dim == 0) return MatrixX<Scalar>(rows, 0);
  MatrixX<Scalar> g = standard_normal<Scalar>(rows, dim, rng);
  Eigen::LLT<MatrixX<Scalar>> llt(ar1_covariance<Scalar>(dim, Scalar(0.5)));
  return g * llt.matrixL().transpose();
}

/// sqrt(n) times the orthonormal basis of (I - P_Z) raw, via a thin QR with
/// nonnegative R diagonal. Returns an empty matrix if the residual is rank deficient.
template <typename Scalar>
MatrixX<Scalar> orthonormal_factors(const MatrixX<Scalar>& raw, const MatrixX<Scalar>& Z) {
  const Index n = raw.rows(), q = raw.cols();
  Eigen::HouseholderQR<MatrixX<Scalar>> zqr(Z);
  MatrixX<Scalar> e = raw;
  for (int pass = 0; pass < 2; ++pass) {
    MatrixX<Scalar> coef = zqr.solve(e);
    e.noalias() -= Z * coef;
  }
  Eigen::HouseholderQR<MatrixX<Scalar>> eqr(e);
  const VectorX<Scalar> rdiag = eqr.matrixQR().diagonal().head(q);
  const Scalar scale = e.colwise().norm().maxCoeff();
  if (!(rdiag.cwiseAbs().minCoeff() > Scalar(1e-10) * scale)) return {};
  MatrixX<Scalar> qmat = eqr.householderQ() * MatrixX<Scalar>::Identity(n, q);
  for (Index k = 0; k < q; ++k)
    if (rdiag(k) < 0) qmat.col(k) *= Scalar(-1);
  return std::sqrt(static_cast<Scalar>(n)) * qmat;
}

inline double draw_poisson(double mean, std::mt19937_64& rng) {
  if (!(mean > 0)) return 0.0;
  if (mean > kPoissonNormalCutover) {
    std::normal_distribution<double> normal(mean, std::sqrt(mean));
    return std::max(0.0, std::round(normal(rng)));
  }
  std::poisson_distribution<long long> poisson(mean);
  return static_cast<double>(poisson(rng));
}

}  // namespace detail

template <typename Scalar = double>
SyntheticDataset<Scalar> generate_scenario(const ScenarioSpec& spec) {
  validate_spec(spec);
  const Index n = spec.n, p = spec.p, d = spec.d, q0 = spec.q0, r0 = spec.r0;
  SyntheticDataset<Scalar> out;

  std::mt19937_64 fixed = detail::fixed_stream(spec);
  const MatrixX<Scalar> U1 = detail::standard_normal<Scalar>(d, r0, fixed);
  const MatrixX<Scalar> V1 = detail::standard_normal<Scalar>(p, r0, fixed);
  out.beta0 = Scalar(4 * spec.rho_z / static_cast<double>(p)) * (V1 * U1.transpose());

  const MatrixX<Scalar> raw_B = detail::standard_normal<Scalar>(p, q0, fixed);
  Eigen::BDCSVD<MatrixX<Scalar>> bsvd(raw_B, Eigen::ComputeThinU);
  MatrixX<Scalar> U2 = bsvd.matrixU();
  linalg::first_nonzero_positive(U2, Scalar(1e-8));
  const MatrixX<Scalar> scaled_U2 = U2 * bsvd.singularValues().asDiagonal();
  const Scalar rho_max = scaled_U2.maxCoeff();
  out.B0 = scaled_U2 * Scalar(spec.rho_B / static_cast<double>(rho_max));

  std::mt19937_64 repl = detail::replicate_stream(spec);
  MatrixX<Scalar> Z(n, d);
  Z.col(0).setOnes();
  Z.rightCols(d - 1) = detail::correlated_rows<Scalar>(n, d - 1, repl);

  for (int attempt = 0; attempt < 2 && out.H0.size() == 0; ++attempt) {
    const MatrixX<Scalar> raw_H = detail::correlated_rows<Scalar>(n, q0, repl);
    out.H0 = detail::orthonormal_factors(raw_H, Z);
  }
  if (out.H0.size() == 0)
    throw Error(ErrorCode::DegenerateResidual, "factor residual on Z is rank deficient twice");

  MatrixX<Scalar> y = Z * out.beta0.transpose();
  y.noalias() += out.H0 * out.B0.transpose();
  if (spec.sigma2 > 0) {
    y += Scalar(std::sqrt(spec.sigma2)) * detail::standard_normal<Scalar>(n, p, repl);
  }

  const double base_offset = spec.offset == OffsetMode::Constant ? spec.a_value : 1.0;
  MatrixX<Scalar> X(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i)
      X(i, j) = static_cast<Scalar>(
          detail::draw_poisson(base_offset * std::exp(static_cast<double>(y(i, j))), repl));

  VectorX<Scalar> a;
  if (spec.offset == OffsetMode::Constant) {
    a = VectorX<Scalar>::Constant(n, Scalar(spec.a_value));
  } else {
    VectorX<Scalar> sums = X.rowwise().sum().cwiseMax(Scalar(1));
    std::vector<Scalar> sorted(sums.data(), sums.data() + n);
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    Scalar median = sorted[static_cast<std::size_t>(n / 2)];
    if (n % 2 == 0) {
      const Scalar lower = *std::max_element(sorted.begin(), sorted.begin() + n / 2);
      median = (median + lower) / Scalar(2);
    }
    a = sums / median;
  }
  out.data = CountDataset<Scalar>{std::move(X), std::move(Z), std::move(a)};
  return out;
}

}  // namespace coap
