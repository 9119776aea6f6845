#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "coap/estep.hpp"
#include "coap/oracle.hpp"
#include "helpers.hpp"

using namespace coap;

namespace {

struct Entry {
  CountDataset<double> data;
  Eigen::MatrixXd ell;
  Eigen::VectorXd vs;
};

Entry single(double x, double a, double vs, double ell) {
  Entry e;
  e.data.X = Eigen::MatrixXd::Constant(1, 1, x);
  e.data.Z = Eigen::MatrixXd::Ones(1, 1);
  e.data.a = Eigen::VectorXd::Constant(1, a);
  e.ell = Eigen::MatrixXd::Constant(1, 1, ell);
  e.vs = Eigen::VectorXd::Constant(1, vs);
  return e;
}

VariationalParams<double> gamma1(double mu, double s2) {
  return {Eigen::MatrixXd::Constant(1, 1, mu), Eigen::MatrixXd::Constant(1, 1, s2)};
}

/// Iterates the closed-form update on one entry until it stops moving.
VariationalParams<double> fixed_point(const Entry& e, double start) {
  VariationalParams<double> g = gamma1(start, 1.0);
  for (int it = 0; it < 500; ++it) {
    const auto next = e_step_update(g, e.ell, e.vs, e.data);
    const double step = std::abs(next.mu(0, 0) - g.mu(0, 0));
    g = next;
    if (step < 1e-15) break;
  }
  return g;
}

}  // namespace

TEST(EStep, PriorMeanIsFixedPointWhenCountMatchesRate) {
  const double ell = 0.7, a = 2.5;
  const Entry e = single(a * std::exp(ell), a, 1.3, ell);
  const auto g = e_step_update(gamma1(ell, 1.0), e.ell, e.vs, e.data);
  EXPECT_NEAR(g.mu(0, 0), ell, 1e-14);
}

TEST(EStep, HandEvaluatedStep) {
  const Entry e = single(2, 1, 1, 0);
  const auto g = e_step_update(gamma1(0, 1.0), e.ell, e.vs, e.data);
  EXPECT_NEAR(g.mu(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(g.sigma2(0, 0), 0.37754066879814546, 1e-12);
}

TEST(EStep, FixedPointMatchesOracleRoot) {
  const Entry e = single(2, 1, 1, 0);
  const auto g = fixed_point(e, 0.0);
  EXPECT_NEAR(g.mu(0, 0), 0.4428544010023885, 1e-6);
  const auto o = oracle::numeric_argmax_fij(2, 1, 1, 0);
  EXPECT_NEAR(g.mu(0, 0), o.y_star, 1e-6);
}

TEST(EStep, RandomEntriesAgreeWithOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(0, 50);
  std::uniform_real_distribution<double> ua(0.1, 20), uvs(0.1, 10), uell(-3, 3);
  for (int t = 0; t < 300; ++t) {
    const double x = count(rng), a = ua(rng), vs = uvs(rng), ell = uell(rng);
    const Entry e = single(x, a, vs, ell);
    const auto g = fixed_point(e, ell);
    const auto o = oracle::numeric_argmax_fij(x, a, vs, ell);
    ASSERT_NEAR(g.mu(0, 0), o.y_star, 1e-6) << "x=" << x << " a=" << a << " vs=" << vs << " ell=" << ell;
    EXPECT_NEAR(g.sigma2(0, 0), 1.0 / (a * std::exp(g.mu(0, 0)) + 1.0 / vs), 1e-14);
    EXPECT_GT(g.sigma2(0, 0), 0.0);
  }
}

TEST(EStep, ClipsLargeExponentsAndCounts) {
  const Entry e = single(3, 1, 1, 0);
  ClipCounter clips;
  const auto g = e_step_update(gamma1(100.0, 1.0), e.ell, e.vs, e.data, 30.0, &clips);
  EXPECT_GT(clips.events, 0u);
  EXPECT_TRUE(std::isfinite(g.mu(0, 0)));
}

TEST(EStep, RejectsNonPositiveVarsigma) {
  Entry e = single(3, 1, 1, 0);
  e.vs(0) = 0;
  try {
    e_step_update(gamma1(0, 1), e.ell, e.vs, e.data);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NonPositiveVariance);
  }
}

TEST(Elbo, HandEvaluatedScalar) {
  const Entry e = single(1, 1, 1, 0);
  const auto t = compute_elbo(e.ell, e.vs, gamma1(0, 1), e.data);
  EXPECT_NEAR(t.total, -std::exp(0.5) - 0.5, 1e-12);
  EXPECT_NEAR(t.total, -2.148721, 1e-6);
}

TEST(Elbo, CountIrrelevantWhenMuIsZero) {
  const Entry e1 = single(1, 1, 1, 0), e2 = single(2, 1, 1, 0);
  EXPECT_EQ(compute_elbo(e1.ell, e1.vs, gamma1(0, 1), e1.data).total,
            compute_elbo(e2.ell, e2.vs, gamma1(0, 1), e2.data).total);
}

TEST(Elbo, ZeroVarianceRejected) {
  const Entry e = single(1, 1, 1, 0);
  try {
    compute_elbo(e.ell, e.vs, gamma1(0, 0), e.data);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NonPositiveVariance);
  }
}

TEST(Elbo, PartsSumToTotalAndMatchLoop) {
  std::mt19937_64 rng(3);
  const auto data = test::small_dataset(12, 7, 3, 2, rng);
  const auto s = test::random_state(data, 2, rng);
  const auto t = compute_elbo(s.params, s.variational, data);
  EXPECT_NEAR(t.total, t.poisson_part + t.gaussian_part + t.entropy_part, 1e-12 * std::abs(t.total));

  const Eigen::MatrixXd L = linear_predictor(s.params, data.Z);
  double loop = 0;
  for (Index i = 0; i < data.n(); ++i)
    for (Index j = 0; j < data.p(); ++j) {
      const double mu = s.variational.mu(i, j), s2 = s.variational.sigma2(i, j), v = s.params.varsigma(j);
      loop += data.X(i, j) * mu - data.a(i) * std::exp(mu + s2 / 2) -
              0.5 * ((mu - L(i, j)) * (mu - L(i, j)) / v + s2 / v + std::log(v)) + 0.5 * std::log(s2);
    }
  EXPECT_NEAR(t.total, loop, 1e-10 * std::abs(loop));
}

TEST(Elbo, ConstantMatchesLogFactorials) {
  CountDataset<double> d;
  d.X = (Eigen::MatrixXd(2, 2) << 0, 3, 5, 1).finished();
  d.Z = Eigen::MatrixXd::Ones(2, 1);
  d.a = Eigen::VectorXd::Ones(2);
  const double expected = -(std::log(6.0) + std::log(120.0)) + 2.0;
  EXPECT_NEAR(elbo_constant(d), expected, 1e-12);
}

// The closed-form update sets sigma2 to the Laplace curvature, not to the
// ELBO-optimal variance, so the ELBO gradient in mu at the fixed point is
// -a e^mu (e^{sigma2/2} - 1) rather than zero.
TEST(Elbo, MuGradientAtFixedPointIsTheLaplaceGap) {
  const Entry e = single(4, 1.5, 0.8, 0.3);
  const auto g = fixed_point(e, 0.3);
  ModelParams<double> m{Eigen::MatrixXd::Constant(1, 1, 0.3), Eigen::MatrixXd::Zero(1, 1),
                        Eigen::MatrixXd::Zero(1, 1), e.vs};
  const auto report = oracle::finite_diff_elbo_grad(m, g, e.data, oracle::GradBlock::Mu);
  const double mu = g.mu(0, 0), s2 = g.sigma2(0, 0);
  EXPECT_NEAR(report.max_abs_error, 1.5 * std::exp(mu) * (std::exp(s2 / 2) - 1), 1e-6);
}
