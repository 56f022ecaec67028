#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "avgflow/bridge.hpp"
#include "avgflow/errors.hpp"
#include "avgflow/kernel.hpp"
#include "oracles.hpp"

using namespace avgflow;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

const KernelTable& trivial_table() {
  static const KernelTable t =
      build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 4), TimeGrid(1.0, 1000));
  return t;
}

const KernelTable& ou_table() {
  static const KernelTable t = build_kernel_table(build_theta_ensemble("ou2d", 64), TimeGrid(1.0, 1000));
  return t;
}

const EndpointPair kFig{vec2(1.0, 0.0), vec2(1.0, 1.0)};

}  // namespace

TEST(Brownian, IncrementStatistics) {
  const TimeGrid grid(1.0, 10);
  const int paths = 20000;
  double sum = 0.0, sq = 0.0;
  for (int p = 0; p < paths; ++p) {
    const BrownianPath b = sample_brownian(grid, 1, 42, p);
    sum += b.increments[3](0);
    sq += b.increments[3](0) * b.increments[3](0);
  }
  const double mean = sum / paths;
  const double var = sq / paths - mean * mean;
  EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(0.1 / paths));
  // SE of the sample variance of a Gaussian: dt·sqrt(2/n).
  EXPECT_LT(std::abs(var - 0.1), 3.0 * 0.1 * std::sqrt(2.0 / paths));
}

TEST(Brownian, StreamsAreReproducibleAndDistinct) {
  const TimeGrid grid(1.0, 5);
  const BrownianPath a = sample_brownian(grid, 2, 9, 3);
  const BrownianPath b = sample_brownian(grid, 2, 9, 3);
  const BrownianPath c = sample_brownian(grid, 2, 9, 4);
  for (int j = 0; j < 5; ++j) {
    EXPECT_EQ(a.increments[j], b.increments[j]);
    EXPECT_NE(a.increments[j], c.increments[j]);
  }
}

TEST(DeterministicBridge, TrivialSystem) {
  const KernelTable& t = trivial_table();
  for (int j : {0, 1, 500, 1000}) EXPECT_LT((deterministic_control(t, kFig, j) - vec2(0.0, 1.0)).norm(), 1e-12);
  const BridgePath p = deterministic_trajectory(t, kFig);
  EXPECT_EQ(p.states[0], kFig.x0);
  for (int j = 0; j <= 1000; ++j) {
    EXPECT_LT((p.states[j] - vec2(1.0, t.grid().node(j))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DeterministicBridge, OuControlAtZero) {
  const KernelTable& t = ou_table();
  const Vector u = deterministic_control(t, kFig, 0);
  const Matrix m1 = oracle::ou_transition(1.0);
  const Vector residual = kFig.xf - m1 * kFig.x0;
  EXPECT_NEAR(residual(0), 0.158529, 1e-6);
  EXPECT_NEAR(residual(1), 0.540302, 1e-6);
  const Vector expect = m1.transpose() * residual / oracle::ou_gramian_scalar(1.0);
  EXPECT_LT((u - expect).cwiseAbs().maxCoeff(), 2e-5);
}

TEST(DeterministicBridge, ZeroResidualGivesZeroControl) {
  const KernelTable& t = ou_table();
  const EndpointPair z{kFig.x0, t.transition(1000) * kFig.x0};
  for (int j : {0, 10, 999, 1000}) EXPECT_LT(deterministic_control(t, z, j).norm(), 1e-15);
}

TEST(DeterministicBridge, EndpointPinning) {
  for (const char* family : {"ou2d", "antidamped2d"}) {
    const KernelTable t = build_kernel_table(build_theta_ensemble(family, 64), TimeGrid(1.0, 1000));
    EXPECT_LE((deterministic_trajectory(t, kFig).states.back() - kFig.xf).cwiseAbs().maxCoeff(), 1e-6) << family;
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 20; ++k) {
      const EndpointPair z{vec2(u(gen), u(gen)), vec2(u(gen), u(gen))};
      const BridgePath p = deterministic_trajectory(t, z);
      EXPECT_EQ(p.states[0], z.x0);
      EXPECT_LE((p.states.back() - z.xf).cwiseAbs().maxCoeff(), 1e-6) << family;
    }
  }
}

TEST(DeterministicBridge, BadEndpointsRejected) {
  EXPECT_THROW(deterministic_control(ou_table(), {Vector::Zero(3), Vector::Zero(2)}, 0), InvalidArgument);
  EXPECT_THROW(deterministic_control(ou_table(), {vec2(NAN, 0), vec2(0, 0)}, 0), InvalidArgument);
}

TEST(VolterraControl, ReducesToDeterministic) {
  const KernelTable& t = ou_table();
  VolterraState s = VolterraState::zero(2);
  s.memory = vec2(0.3, -2.0);
  EXPECT_EQ(volterra_control(t, kFig, s, 17, 0.0), deterministic_control(t, kFig, 17));
  EXPECT_LT((volterra_control(t, kFig, VolterraState::zero(2), 17, 1.0) - deterministic_control(t, kFig, 17)).norm(),
            1e-15);
  EXPECT_THROW(volterra_control(t, kFig, s, 1000, 1.0), NearTerminalSingularity);
  EXPECT_THROW(volterra_control(t, kFig, s, 10, -1.0), InvalidArgument);
}

TEST(VolterraControl, TrivialSingleIncrement) {
  const KernelTable& t = trivial_table();
  const Vector dw = vec2(0.03, -0.05);
  VolterraState s = VolterraState::zero(2);
  s.advance(t, 0, dw);
  EXPECT_LT((s.memory - dw).norm(), 1e-12);
  // u(0.5) = (xf - x0) - Φ^T G_{1,0}^{-1} Φ dW_0 with Φ = I, G_{1,0} = I.
  EXPECT_LT((volterra_control(t, kFig, s, 500, 1.0) - (vec2(0.0, 1.0) - dw)).norm(), 1e-12);
}

TEST(VolterraState, AdvanceExamples) {
  const KernelTable& t = trivial_table();
  VolterraState s = VolterraState::zero(2);
  s.advance(t, 3, Vector::Zero(2));
  EXPECT_TRUE(s.memory.isZero(0.0));
  EXPECT_EQ(s.index(), 1);
  const VolterraState next = advance_volterra(VolterraState::zero(2), t, 500, vec2(1.0, -2.0));
  EXPECT_LT((next.memory - vec2(2.0, -4.0)).norm(), 1e-12);
  EXPECT_THROW(advance_volterra(next, t, 1000, vec2(1.0, 1.0)), NearTerminalSingularity);
}

TEST(VolterraTrajectory, ZeroEpsilonIsDeterministic) {
  const KernelTable& t = ou_table();
  const BrownianPath noise = sample_brownian(t.grid(), 2, 1, 0);
  const BridgePath a = volterra_trajectory(t, kFig, noise, 0.0);
  const BridgePath b = deterministic_trajectory(t, kFig);
  for (int j = 0; j <= 1000; ++j) EXPECT_EQ(a.states[j], b.states[j]);
  EXPECT_EQ(a.controls.size(), 1000u);
}

TEST(VolterraTrajectory, ScalarBridgeOracle) {
  const KernelTable t =
      build_kernel_table(constant_ensemble(Matrix::Zero(1, 1), Matrix::Identity(1, 1), 4), TimeGrid(1.0, 1000));
  for (std::uint64_t stream = 0; stream < 20; ++stream) {
    const BrownianPath noise = sample_brownian(t.grid(), 1, 77, stream);
    std::vector<double> dw;
    for (const auto& v : noise.increments) dw.push_back(v(0));
    const EndpointPair z{Vector::Constant(1, 0.3), Vector::Constant(1, -0.4)};
    const BridgePath p = volterra_trajectory(t, z, noise, 1.0);
    const std::vector<double> ref = oracle::brownian_bridge(0.3, -0.4, 1.0, dw);
    double worst = 0.0;
    for (int j = 0; j <= 1000; ++j) worst = std::max(worst, std::abs(p.states[j](0) - ref[j]));
    EXPECT_LE(worst, 1e-3) << stream;
    EXPECT_EQ(p.states[0](0), 0.3);
  }
}

TEST(VolterraTrajectory, EpsilonContinuity) {
  const KernelTable& t = ou_table();
  const BrownianPath noise = sample_brownian(t.grid(), 2, 5, 0);
  const BridgePath det = deterministic_trajectory(t, kFig);
  double previous = INFINITY;
  for (double eps : {1e-2, 1e-4, 1e-6, 1e-8}) {
    const BridgePath p = volterra_trajectory(t, kFig, noise, eps);
    double gap = 0.0;
    for (int j = 0; j <= 1000; ++j) gap = std::max(gap, (p.states[j] - det.states[j]).norm());
    EXPECT_LT(gap, previous);
    previous = gap;
  }
  EXPECT_LT(previous, 1e-3);
}

TEST(VolterraTrajectory, TerminalErrorShrinksWithStep) {
  // Same Brownian paths on two grids: the fine increments are summed pairwise.
  const ThetaEnsemble ens = build_theta_ensemble("ou2d", 64);
  const KernelTable coarse = build_kernel_table(ens, TimeGrid(1.0, 200));
  const KernelTable fine = build_kernel_table(ens, TimeGrid(1.0, 400));
  std::vector<double> err_coarse, err_fine;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const BrownianPath f = sample_brownian(fine.grid(), 2, 31, s);
    BrownianPath c;
    c.grid = coarse.grid();
    for (int j = 0; j < 200; ++j) c.increments.push_back(f.increments[2 * j] + f.increments[2 * j + 1]);
    err_coarse.push_back((volterra_trajectory(coarse, kFig, c, 1.0).states.back() - kFig.xf).norm());
    err_fine.push_back((volterra_trajectory(fine, kFig, f, 1.0).states.back() - kFig.xf).norm());
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  EXPECT_LT(median(err_fine), median(err_coarse));
}

TEST(NoiseConvolution, MatchesDirectSum) {
  const KernelTable t = build_kernel_table(build_theta_ensemble("antidamped2d", 16), TimeGrid(1.0, 30));
  const BrownianPath noise = sample_brownian(t.grid(), 2, 2, 0);
  const auto conv = noise_convolution(t, noise.increments, 0.5);
  for (int j = 0; j <= 30; ++j) {
    Vector direct = Vector::Zero(2);
    for (int k = 0; k < j; ++k) direct += t.phi(j, k) * noise.increments[k];
    EXPECT_LT((conv[j] - std::sqrt(0.5) * direct).norm(), 1e-12);
  }
}
