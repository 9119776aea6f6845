#include <gtest/gtest.h>

#include <random>

#include "coap/fit.hpp"
#include "coap/oracle.hpp"
#include "coap/simulate.hpp"
#include "helpers.hpp"

using namespace coap;
using test::max_abs;

namespace {

ScenarioSpec small_spec(std::uint64_t seed = 1) {
  ScenarioSpec s;
  s.n = 60;
  s.p = 40;
  s.d = 4;
  s.q0 = 2;
  s.r0 = 2;
  s.rho_z = 2.0;
  s.rho_B = 1.0;
  s.seed = seed;
  return s;
}

FitConfig small_config() {
  FitConfig c;
  c.q = 2;
  c.r = 2;
  c.max_iter = 100;
  return c;
}

bool identical(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace

TEST(Fit, HugeToleranceStopsAfterOneSweep) {
  const auto sim = generate_scenario(small_spec());
  FitConfig c = small_config();
  c.eps_elbo = 1e9;
  const auto r = fit(sim.data, c);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.elbo_trace.size(), 1u);
}

TEST(Fit, MaxIterReachedWithoutConvergence) {
  const auto sim = generate_scenario(small_spec());
  FitConfig c = small_config();
  c.max_iter = 2;
  c.eps_elbo = 1e-300;
  const auto r = fit(sim.data, c);
  EXPECT_EQ(r.iterations, 2);
  EXPECT_FALSE(r.converged);
}

TEST(Fit, BitIdenticalAcrossRuns) {
  const auto sim = generate_scenario(small_spec());
  const auto a = fit(sim.data, small_config());
  const auto b = fit(sim.data, small_config());
  EXPECT_TRUE(identical(a.params.beta, b.params.beta));
  EXPECT_TRUE(identical(a.params.B, b.params.B));
  EXPECT_TRUE(identical(a.params.H, b.params.H));
  EXPECT_EQ(a.elbo_trace, b.elbo_trace);
}

TEST(Fit, ElboIsMonotone) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto sim = generate_scenario(small_spec(seed));
    const auto r = fit(sim.data, small_config());
    EXPECT_EQ(r.diagnostics.monotonicity_violations, 0u);
    EXPECT_GE(r.elbo_trace.front(), r.diagnostics.elbo_initial - 1e-8 * std::abs(r.diagnostics.elbo_initial));
    for (std::size_t t = 1; t < r.elbo_trace.size(); ++t)
      EXPECT_GE(r.elbo_trace[t], r.elbo_trace[t - 1] - 1e-8 * std::abs(r.elbo_trace[t - 1]));
  }
}

TEST(Fit, OutputsSatisfyConstraints) {
  const auto sim = generate_scenario(small_spec());
  const auto r = fit(sim.data, small_config());
  const Index n = sim.data.n();
  EXPECT_LE(linalg::numerical_rank(r.params.beta, 1e-10), 2);
  EXPECT_LT(max_abs(r.params.H.transpose() * r.params.H / double(n) - Eigen::MatrixXd::Identity(2, 2)), 1e-10);
  EXPECT_LT(max_abs(sim.data.Z.transpose() * r.params.H), 1e-7);
  EXPECT_TRUE((r.params.varsigma.array() > 0).all());
  EXPECT_EQ(r.diagnostics.iteration_seconds.size(), static_cast<std::size_t>(r.iterations));
}

TEST(Fit, EnforcementPreservesFittedValuesBeforeProjection) {
  const auto sim = generate_scenario(small_spec());
  const auto r = fit(sim.data, small_config());
  const auto& raw = r.final_iterate.params;
  const Eigen::MatrixXd before = sim.data.Z * raw.beta.transpose() + raw.H * raw.B.transpose();
  const Eigen::MatrixXd after = sim.data.Z * r.beta_pre_projection.transpose() + r.params.H * r.params.B.transpose();
  EXPECT_LT(max_abs(before - after), 1e-10 * std::max(1.0, max_abs(before)));
}

TEST(Fit, WarmStartFromConvergedStateStopsQuickly) {
  const auto sim = generate_scenario(small_spec());
  FitConfig c = small_config();
  c.max_iter = 3000;
  c.eps_elbo = 1e-9;
  const auto r = fit(sim.data, c);
  ASSERT_TRUE(r.converged);
  FitConfig warm = small_config();
  const auto again = fit(sim.data, warm, std::optional<FitState<double>>(r.final_iterate));
  EXPECT_LE(again.iterations, 2);
}

TEST(Fit, LoadingsAndFactorsStationaryAtConvergence) {
  const auto sim = generate_scenario(small_spec());
  FitConfig c = small_config();
  c.max_iter = 3000;
  c.eps_elbo = 1e-10;
  const auto r = fit(sim.data, c);
  const auto& s = r.final_iterate;
  const double scale = std::abs(r.elbo_trace.back()) / double(sim.data.X.size());
  const auto gB = oracle::finite_diff_elbo_grad(s.params, s.variational, sim.data, oracle::GradBlock::Loadings);
  EXPECT_LE(gB.max_abs_error, 1e-2 * std::max(1.0, scale)) << gB.worst_case_input;
}

TEST(Fit, JointUpdateRuns) {
  const auto sim = generate_scenario(small_spec());
  FitConfig c = small_config();
  c.joint_beta_update = true;
  const auto r = fit(sim.data, c);
  EXPECT_GT(r.iterations, 0);
  EXPECT_LE(linalg::numerical_rank(r.params.beta, 1e-10), 2);
}

TEST(Fit, InitializationShapes) {
  const auto sim = generate_scenario(small_spec());
  const auto s = initialize(sim.data, small_config());
  EXPECT_EQ(s.params.beta.rows(), 40);
  EXPECT_EQ(s.params.beta.cols(), 4);
  EXPECT_EQ(s.params.H.cols(), 2);
  EXPECT_EQ(s.params.B.rows(), 40);
  EXPECT_GE(s.params.varsigma.minCoeff(), kInitialVarsigmaFloor);
  EXPECT_LE(linalg::numerical_rank(s.params.beta, 1e-10), 2);
}
