#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "coap/error.hpp"
#include "coap/fit.hpp"
#include "coap/linalg.hpp"
#include "coap/model.hpp"

namespace coap {

inline constexpr int kDefaultQMax = 15;
inline constexpr int kDefaultRMax = 24;
/// Denominators of singular-value ratios are floored at this times nu_1.
inline constexpr double kRatioFloor = 1e-10;

struct SvrReport {
  int q_hat = 1;
  int r_hat = 1;
  std::vector<double> ratios_B;
  std::vector<double> ratios_beta;
  int q_max = kDefaultQMax;
  int r_max = kDefaultRMax;
};

/// (nu_1 / nu_2, ..., nu_{k_max-1} / nu_{k_max}) for the singular values of m.
template <typename Derived>
std::vector<double> singular_value_ratios(const Eigen::MatrixBase<Derived>& m, Index k_max) {
  if (m.size() == 0) throw Error(ErrorCode::EmptyMatrix, "singular_value_ratios on empty matrix");
  if (k_max < 2 || k_max > std::min(m.rows(), m.cols()))
    throw Error(ErrorCode::InvalidConfig, "k_max must lie in [2, min(rows, cols)]");
  const auto nu = linalg::singular_values(m);
  const double floor = std::max(kRatioFloor * static_cast<double>(nu(0)),
                                std::numeric_limits<double>::min());
  std::vector<double> ratios(static_cast<std::size_t>(k_max - 1));
  for (Index k = 0; k + 1 < k_max; ++k)
    ratios[static_cast<std::size_t>(k)] =
        static_cast<double>(nu(k)) / std::max(static_cast<double>(nu(k + 1)), floor);
  return ratios;
}

/// 1-based argmax; ties go to the smaller index.
inline int ratio_argmax(const std::vector<double>& ratios) {
  if (ratios.empty()) throw Error(ErrorCode::EmptyMatrix, "no ratios to maximize");
  return static_cast<int>(std::max_element(ratios.begin(), ratios.end()) - ratios.begin()) + 1;
}

/// Fits once at (q_max, r_max) and picks q and r at the largest consecutive
/// singular-value ratio of the identified B_hat and beta_hat.
template <typename Scalar>
SvrReport svr_select(const CountDataset<Scalar>& data, int q_max, int r_max, FitConfig config,
                     FitResult<Scalar>* fit_out = nullptr) {
  config.q = q_max;
  config.r = r_max;
  if (q_max < 2 || r_max < 2)
    throw Error(ErrorCode::InvalidConfig, "q_max and r_max must be at least 2");
  const FitResult<Scalar> result = fit(validate_inputs(data, config));

  SvrReport report;
  report.q_max = q_max;
  report.r_max = r_max;
  report.ratios_B = singular_value_ratios(result.params.B, q_max);
  report.ratios_beta = singular_value_ratios(result.params.beta, r_max);
  report.q_hat = ratio_argmax(report.ratios_B);
  report.r_hat = ratio_argmax(report.ratios_beta);
  if (fit_out) *fit_out = result;
  return report;
}

}  // namespace coap
