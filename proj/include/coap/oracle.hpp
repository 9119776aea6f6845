#pragma once

// Slow, independent reference computations used by the test suites. Nothing
// here is called by the estimator itself.

#include <cstdint>
#include <string>

#include "coap/linalg.hpp"
#include "coap/model.hpp"

namespace coap::oracle {

struct OracleReport {
  double max_abs_error = 0;
  int trials = 1;
  std::string worst_case_input;
};

struct FijArgmax {
  double y_star = 0;
  double fpp = 0;  // f''(y_star) = -a e^{y_star} - 1 / varsigma
};

/// Maximizer of f(y) = x y - a e^y - (y - ell)^2 / (2 varsigma), by Newton
/// steps safeguarded with bisection on a bracket of the root of f'.
FijArgmax numeric_argmax_fij(double x, double a, double varsigma, double ell);

enum class GradBlock { Loadings, Factors, Mu };

/// Central finite differences of compute_elbo over one parameter block, with
/// step 1e-6 * max(1, |value|). max_abs_error is the largest gradient component.
OracleReport finite_diff_elbo_grad(const ModelParams<double>& params,
                                   const VariationalParams<double>& gamma,
                                   const CountDataset<double>& data, GradBlock block,
                                   double rel_step = 1e-6);

/// Maximizes -(1/n) sum_ij (Ytilde_ij - z_i^T beta_j)^2 / varsigma_j over
/// beta = L R^T with BFGS from `restarts` random starts. Tiny problems only.
Eigen::MatrixXd brute_force_lowrank(const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& Z,
                                    const Eigen::VectorXd& varsigma, int r,
                                    std::uint64_t seed = 1, int restarts = 20);

struct JointOptimum {
  Eigen::MatrixXd beta;
  Eigen::VectorXd varsigma;
  double objective = 0;
};

/// Maximizes (n/2)[-sum ln varsigma_j - sum W_jj(beta) / varsigma_j] over
/// (L, R, ln varsigma) with BFGS from `restarts` random starts.
JointOptimum brute_force_joint(const Eigen::MatrixXd& y_tilde, const Eigen::MatrixXd& Z,
                               const Eigen::MatrixXd& sigma2, int r, std::uint64_t seed = 1,
                               int restarts = 20);

}  // namespace coap::oracle
