#include <gtest/gtest.h>

#include <random>

#include "coap/identifiability.hpp"
#include "helpers.hpp"

using namespace coap;
using test::max_abs;
using test::normal_matrix;

namespace {

struct Case {
  Eigen::MatrixXd H, B, Z;
};

Case random_case(Index n, Index p, Index d, Index q, std::mt19937_64& rng) {
  return {normal_matrix(n, q, rng), normal_matrix(p, q, rng), test::covariates(n, d, rng)};
}

}  // namespace

TEST(Identifiability, ConstraintsHold) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const Case c = random_case(40, 15, 3, 4, rng);
    const auto out = enforce_identifiability(c.H, c.B, c.Z);
    const Index n = c.H.rows(), q = c.H.cols();
    EXPECT_LT(max_abs(out.H.transpose() * out.H / double(n) - Eigen::MatrixXd::Identity(q, q)), 1e-10);
    EXPECT_LT(max_abs(c.Z.transpose() * out.H), 1e-8 * std::sqrt(double(n)));
    const Eigen::MatrixXd btb = out.B.transpose() * out.B;
    EXPECT_LT(max_abs(btb - Eigen::MatrixXd(btb.diagonal().asDiagonal())), 1e-10 * btb.norm());
    for (Index k = 0; k + 1 < q; ++k) EXPECT_GE(btb(k, k), btb(k + 1, k + 1));
    EXPECT_FALSE(out.degenerate);
  }
}

TEST(Identifiability, PreservesResidualProductAndMovesProjectionIntoAlpha) {
  std::mt19937_64 rng(2);
  const Case c = random_case(30, 12, 3, 3, rng);
  const auto out = enforce_identifiability(c.H, c.B, c.Z);
  const Eigen::MatrixXd E = c.H - c.Z * out.alpha_hat;
  EXPECT_LT(max_abs(out.H * out.B.transpose() - E * c.B.transpose()), 1e-10);
  // HB^T = H'B'^T + Z alpha B^T exactly.
  EXPECT_LT(max_abs(c.H * c.B.transpose() - out.H * out.B.transpose() - c.Z * out.alpha_hat * c.B.transpose()),
            1e-10);
}

TEST(Identifiability, IdentifiedInputIsAFixedPointUpToSign) {
  std::mt19937_64 rng(3);
  const Case c = random_case(30, 12, 3, 3, rng);
  const auto once = enforce_identifiability(c.H, c.B, c.Z);
  const auto twice = enforce_identifiability(once.H, once.B, c.Z);
  for (Index k = 0; k < 3; ++k) {
    const double sign = once.B.col(k).dot(twice.B.col(k)) >= 0 ? 1.0 : -1.0;
    EXPECT_LT((once.B.col(k) - sign * twice.B.col(k)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((once.H.col(k) - sign * twice.H.col(k)).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_LT(max_abs(twice.alpha_hat), 1e-10);
}

TEST(Identifiability, SignRuleOnFirstNonNegligibleEntry) {
  std::mt19937_64 rng(4);
  const Case c = random_case(20, 6, 2, 1, rng);
  const Case flipped{-c.H, c.B, c.Z};
  const auto a = enforce_identifiability(c.H, c.B, c.Z);
  const auto b = enforce_identifiability(flipped.H, flipped.B, c.Z);
  Index first = 0;
  while (std::abs(a.B(first, 0)) <= 1e-8) ++first;
  EXPECT_GT(a.B(first, 0), 0.0);
  EXPECT_GT(b.B(first, 0), 0.0);
  EXPECT_LT(((a.H + b.H).cwiseAbs()).maxCoeff(), 1e-10);
}

TEST(Identifiability, RankDeficientProductFlagged) {
  std::mt19937_64 rng(5);
  Case c = random_case(20, 6, 2, 2, rng);
  c.B.col(1) = 2.0 * c.B.col(0);
  EXPECT_TRUE(enforce_identifiability(c.H, c.B, c.Z).degenerate);
}

TEST(Identifiability, ShapeErrors) {
  std::mt19937_64 rng(6);
  const Case c = random_case(20, 6, 2, 2, rng);
  try {
    enforce_identifiability(c.H, Eigen::MatrixXd(c.B.leftCols(1)), c.Z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}
