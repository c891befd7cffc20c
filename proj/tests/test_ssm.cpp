#include <gtest/gtest.h>

#include <random>
#include <string>

#include "sdsbm/error.hpp"
#include "sdsbm/ssm.hpp"

namespace sdsbm {
namespace {

TEST(BuildStateSpace, PeriodThree) {
  const auto ss = build_state_space(3, 10, 0.2, 0.3, 0.0);
  Eigen::Matrix3d G;
  G << 1, 0, 0, 0, -1, -1, 0, 1, 0;
  EXPECT_EQ(ss.G, Eigen::MatrixXd(G));
  EXPECT_EQ(ss.H, Eigen::RowVector3d(10, 10, 0).eval());
  EXPECT_EQ(ss.Q, Eigen::Vector3d(0.2, 0.3, 0.0).asDiagonal().toDenseMatrix());
  EXPECT_EQ(ss.dim(), 3);
}

TEST(BuildStateSpace, PeriodTwo) {
  const auto ss = build_state_space(2, 5, 0, 0, 0);
  Eigen::Matrix2d G;
  G << 1, 0, 0, -1;
  EXPECT_EQ(ss.G, Eigen::MatrixXd(G));
  EXPECT_EQ(ss.H, Eigen::RowVector2d(5, 5).eval());
}

TEST(BuildStateSpace, PeriodFourApplication) {
  const auto ss = build_state_space(4, 3, 0, 0, 0);
  Eigen::Vector4d x(0.5, 0.1, 0.2, 0.3);
  Eigen::Vector4d expect(0.5, -(0.1 + 0.2 + 0.3), 0.1, 0.2);
  EXPECT_TRUE((ss.G * x).isApprox(expect, 1e-15));
}

TEST(BuildStateSpace, Rejects) {
  EXPECT_THROW(build_state_space(1, 10, 0, 0, 0), InvalidArgument);
  EXPECT_THROW(build_state_space(3, 0, 0, 0, 0), InvalidArgument);
  EXPECT_THROW(build_state_space(3, 10, -1, 0, 0), InvalidArgument);
  EXPECT_THROW(build_state_space(3, 10, 0, 0, -1e-9), InvalidArgument);
}

TEST(BuildStateSpace, Properties) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int d = 2; d <= 24; ++d) {
    const auto ss = build_state_space(d, 7, 1e-3, 2e-3, 0.0);
    EXPECT_NEAR(std::abs(ss.G.determinant()), 1.0, 1e-12) << d;
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = g(rng);
    EXPECT_NEAR(ss.H.dot(x), 7.0 * (x[0] + x[1]), 1e-12);
    // Noiseless periodicity of the seasonal sub-block: G^d x = x once x has
    // been propagated by one step (so that all offsets are on the cycle).
    Eigen::VectorXd y = ss.G * x;
    Eigen::VectorXd z = y;
    for (int k = 0; k < d; ++k) z = ss.G * z;
    EXPECT_TRUE(z.isApprox(y, 1e-10)) << d;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ss.Q);
    EXPECT_GE(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(BinomialObsNoise, Examples) {
  EXPECT_DOUBLE_EQ(binomial_obs_noise(50, 100), 25.0);
  EXPECT_NEAR(binomial_obs_noise(0, 100), 100 * 1e-6 * (1 - 1e-6), 1e-18);
  EXPECT_NEAR(binomial_obs_noise(30, 1000), 29.1, 1e-12);
  EXPECT_GT(binomial_obs_noise(150, 100), 0.0);
  EXPECT_GT(binomial_obs_noise(-3, 100), 0.0);
  EXPECT_THROW(binomial_obs_noise(1, 0), InvalidArgument);
}

TEST(NormalApproximation, RuleOfThumb) {
  EXPECT_TRUE(normal_approximation_ok(50, 100));
  EXPECT_FALSE(normal_approximation_ok(5, 100));
  EXPECT_FALSE(normal_approximation_ok(95, 100));
}

TEST(ObservationVariance, Examples) {
  EXPECT_DOUBLE_EQ(observation_variance(25, 100, 0.0), 25.0);
  EXPECT_DOUBLE_EQ(observation_variance(25, 100, 0.01), 125.0);
  EXPECT_NEAR(observation_variance(29.1, 1000, 1e-4), 129.1, 1e-12);
}

TEST(Augment, PeriodTwoMatrix) {
  const auto aug = augment(build_state_space(2, 5, 0.1, 0.2, 0.3));
  Eigen::Matrix4d G;
  G << 1, 0, 0, 0, 0, -1, 0, 0, 0, -1, 0, 0, 1, 0, 0, 0;
  EXPECT_EQ(aug.model.G, Eigen::MatrixXd(G));
  EXPECT_EQ(aug.model.H, Eigen::RowVector4d(5, 5, 0, 0).eval());
  EXPECT_EQ(aug.model.Q, Eigen::Vector4d(0.1, 0.2, 0, 0).asDiagonal().toDenseMatrix());
  EXPECT_EQ(aug.model.r, 0.3);
}

TEST(Augment, Selectors) {
  for (int d = 2; d <= 6; ++d) {
    const auto aug = augment(build_state_space(d, 4, 0, 0, 0));
    Eigen::RowVectorXd d1 = Eigen::RowVectorXd::Zero(d + 2);
    d1[0] = 1;
    d1[d + 1] = -1;
    Eigen::RowVectorXd d2 = Eigen::RowVectorXd::Zero(d + 2);
    d2[1] = 1;
    d2[d] = -1;
    EXPECT_EQ(aug.d1, d1);
    EXPECT_EQ(aug.d2, d2);
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(d + 2, 1.0, d + 2.0);
    EXPECT_EQ(aug.d1.dot(x), x[0] - x[d + 1]);
  }
}

TEST(Augment, ProjectionMatchesBaseTrajectory) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int d = 2; d <= 9; ++d) {
    const auto ss = build_state_space(d, 4, 0, 0, 0);
    const auto aug = augment(ss);
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = g(rng);
    Eigen::VectorXd xs = Eigen::VectorXd::Zero(d + 2);
    xs.head(d) = x;
    xs[d] = g(rng);
    xs[d + 1] = g(rng);
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd prev = x;
      x = ss.G * x;
      xs = aug.model.G * xs;
      ASSERT_EQ(xs.head(d), x) << "d=" << d << " k=" << k;
      // The appended slots carry the noiseless seasonal prediction and m_{t-1}.
      ASSERT_EQ(xs[d + 1], prev[0]);
      ASSERT_EQ(xs[d], (ss.G.row(1) * prev).value());
    }
  }
}

// Under a noisy transition the selectors return the two innovations exactly.
TEST(Augment, SelectorsRecoverInnovations) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  const int d = 5;
  const auto ss = build_state_space(d, 4, 1, 1, 0);
  const auto aug = augment(ss);
  Eigen::VectorXd xs = Eigen::VectorXd::Zero(d + 2);
  for (int i = 0; i < d; ++i) xs[i] = g(rng);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd noise = Eigen::VectorXd::Zero(d + 2);
    noise[0] = g(rng);
    noise[1] = g(rng);
    xs = (aug.model.G * xs + noise).eval();
    EXPECT_NEAR(aug.d1.dot(xs), noise[0], 1e-12);
    EXPECT_NEAR(aug.d2.dot(xs), noise[1], 1e-12);
  }
}

TEST(ModelParams, Validate) {
  ModelParams p;
  p.period = 3;
  p.q_m = p.q_s = p.r = 0.1;
  p.mu0 = Eigen::VectorXd::Zero(3);
  p.sigma0 = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_NO_THROW(p.validate());
  auto bad = p;
  bad.sigma0(0, 1) = 0.5;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.sigma0(0, 0) = -1.0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.mu0 = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.r = -1;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = p;
  bad.mu0[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(bad.validate(), InvalidArgument);
  const auto ss = p.state_space(9);
  EXPECT_EQ(ss.n, 9);
  EXPECT_EQ(ss.Q(0, 0), 0.1);
}

}  // namespace
}  // namespace sdsbm
