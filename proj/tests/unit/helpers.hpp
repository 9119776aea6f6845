#pragma once

#include <cmath>
#include <random>

#include "coap/fit.hpp"
#include "coap/model.hpp"

namespace coap::test {

inline Eigen::MatrixXd normal_matrix(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline Eigen::MatrixXd covariates(Index n, Index d, std::mt19937_64& rng) {
  Eigen::MatrixXd Z(n, d);
  Z.col(0).setOnes();
  if (d > 1) Z.rightCols(d - 1) = normal_matrix(n, d - 1, rng);
  return Z;
}

/// Small Poisson log-normal dataset with moderate counts.
inline CountDataset<double> small_dataset(Index n, Index p, Index d, Index q, std::mt19937_64& rng) {
  CountDataset<double> data;
  data.Z = covariates(n, d, rng);
  const Eigen::MatrixXd beta = normal_matrix(p, d, rng, 0.3);
  const Eigen::MatrixXd H = normal_matrix(n, q, rng);
  const Eigen::MatrixXd B = normal_matrix(p, q, rng, 0.5);
  Eigen::MatrixXd y = data.Z * beta.transpose() + H * B.transpose() + normal_matrix(n, p, rng, 0.3);
  y.col(0).array() += 1.0;
  data.X.resize(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) {
      std::poisson_distribution<int> pois(std::exp(std::min(y(i, j), 8.0)));
      data.X(i, j) = pois(rng);
    }
  data.a = Eigen::VectorXd::Ones(n);
  return data;
}

/// A random but valid (theta, gamma) state for the dataset.
inline FitState<double> random_state(const CountDataset<double>& data, Index q, std::mt19937_64& rng) {
  FitState<double> s;
  const Index n = data.n(), p = data.p(), d = data.d();
  s.params.beta = normal_matrix(p, d, rng, 0.2);
  s.params.B = normal_matrix(p, q, rng, 0.5);
  s.params.H = normal_matrix(n, q, rng);
  std::uniform_real_distribution<double> unif(0.3, 2.0);
  s.params.varsigma.resize(p);
  for (Index j = 0; j < p; ++j) s.params.varsigma(j) = unif(rng);
  s.variational.mu = normal_matrix(n, p, rng, 0.5);
  s.variational.sigma2 = Eigen::MatrixXd::NullaryExpr(n, p, [&] { return unif(rng); });
  return s;
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace coap::test
