#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "avgflow/coupling.hpp"
#include "avgflow/distributions.hpp"
#include "avgflow/errors.hpp"
#include "avgflow/kernel.hpp"
#include "avgflow/metrics.hpp"
#include "avgflow/sim.hpp"

using namespace avgflow;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

KernelTable ou(int n) { return build_kernel_table(build_theta_ensemble("ou2d", 32), TimeGrid(1.0, n)); }

class ConstantControl : public Controller {
 public:
  explicit ConstantControl(Vector u) : u_(std::move(u)) {}
  Vector control(const StepContext&) override { return u_; }

 private:
  Vector u_;
};

class FailingControl : public Controller {
 public:
  Vector control(const StepContext& ctx) override {
    if (ctx.index == 7) throw InvalidArgument("boom");
    return Vector::Zero(2);
  }
};

// Posterior control with E(R_ε) from the direct sum, recording the
// posterior means along the path.
class RecordingPosterior : public Controller {
 public:
  RecordingPosterior(const MixturePosterior& post, const Vector& x0, std::vector<Vector>* means)
      : ctx_(post, x0), means_(means) {}
  Vector control(const StepContext& step) override {
    history_.push_back(step.volterra->memory);
    update_mean_r(ctx_, step.index, history_);
    ctx_.state = *step.state;
    means_->push_back(posterior_mean(ctx_, step.index));
    return posterior_control(ctx_, *step.volterra, step.index);
  }

 private:
  PosteriorContext ctx_;
  std::vector<Vector> history_;
  std::vector<Vector>* means_;
};

double max_gap(const RolloutEnsemble& a, const RolloutEnsemble& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.paths[i].states.size(); ++j) {
      gap = std::max(gap, (a.paths[i].states[j] - b.paths[i].states[j]).cwiseAbs().maxCoeff());
    }
  }
  return gap;
}

}  // namespace

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] = 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  try {
    parallel_for(100, 4, [](std::size_t i) {
      if (i % 10 == 3) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "3");
  }
}

TEST(RolloutStochastic, ZeroEpsilonExactOnTrivialSystem) {
  const KernelTable t =
      build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 4), TimeGrid(1.0, 1000));
  const auto ens = rollout_stochastic(t, deterministic_exact_factory(t, {vec2(1, 1)}), {vec2(1, 0)}, 0.0, 1,
                                      ControllerTag::kDeterministicExact);
  EXPECT_LE((ens.paths[0].states.back() - vec2(1, 1)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(ens.paths[0].controls.size(), 1000u);
  EXPECT_EQ(ens.paths[0].states.size(), 1001u);
}

TEST(RolloutStochastic, ZeroEpsilonFirstOrderOnOu) {
  // Left-point sums of the control convolution are first order in Δt.
  std::vector<double> err;
  for (int n : {250, 500, 1000}) {
    const KernelTable t = ou(n);
    const auto ens = rollout_stochastic(t, deterministic_exact_factory(t, {vec2(1, 1)}), {vec2(1, 0)}, 0.0, 1,
                                        ControllerTag::kDeterministicExact);
    err.push_back((ens.paths[0].states.back() - vec2(1, 1)).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(err[2], 1e-4);
  EXPECT_GT(err[0] / err[1], 1.5);
  EXPECT_GT(err[1] / err[2], 1.5);
}

TEST(RolloutStochastic, SchemeConsistencyWithTrapezoid) {
  std::vector<double> gaps;
  for (int n : {200, 400, 800}) {
    const KernelTable t = ou(n);
    const std::vector<Vector> x0{vec2(1, 0), vec2(0.5, -0.2)};
    const auto factory = deterministic_exact_factory(t, {vec2(1, 1), vec2(-1, 0.3)});
    gaps.push_back(max_gap(rollout_stochastic(t, factory, x0, 0.0, 3, ControllerTag::kDeterministicExact),
                           rollout_deterministic(t, factory, x0, ControllerTag::kDeterministicExact)));
  }
  for (int k = 0; k < 2; ++k) {
    const double ratio = gaps[k] / gaps[k + 1];
    EXPECT_GE(ratio, 1.5) << ratio;
    EXPECT_LE(ratio, 3.0) << ratio;
  }
}

TEST(RolloutStochastic, VolterraEnsembleHitsEndpointOnAverage) {
  const KernelTable t = ou(250);
  const std::vector<Vector> x0(2000, vec2(1, 0));
  const auto ens = rollout_stochastic(t, volterra_exact_factory(t, std::vector<Vector>(2000, vec2(1, 1)), 1.0), x0,
                                      1.0, 11, ControllerTag::kVolterraExact);
  const auto terminal = ens.terminal_states();
  const Vector mean = sample_mean(terminal);
  const Vector se = (sample_covariance(terminal).diagonal() / 2000.0).cwiseSqrt();
  for (int k = 0; k < 2; ++k) EXPECT_LT(std::abs(mean(k) - 1.0), 3.0 * se(k) + 1e-12);
}

TEST(RolloutStochastic, ReproducibleAcrossThreads) {
  const KernelTable t = ou(100);
  const std::vector<Vector> x0(16, vec2(1, 0));
  const auto f = volterra_exact_factory(t, std::vector<Vector>(16, vec2(1, 1)), 0.5);
  const auto a = rollout_stochastic(t, f, x0, 0.5, 5, ControllerTag::kVolterraExact, 1);
  const auto b = rollout_stochastic(t, f, x0, 0.5, 5, ControllerTag::kVolterraExact, 1);
  const auto c = rollout_stochastic(t, f, x0, 0.5, 5, ControllerTag::kVolterraExact, 4);
  const auto d = rollout_stochastic(t, f, x0, 0.5, 6, ControllerTag::kVolterraExact, 1);
  EXPECT_EQ(max_gap(a, b), 0.0);
  EXPECT_EQ(max_gap(a, c), 0.0);
  EXPECT_GT(max_gap(a, d), 0.0);
}

TEST(RolloutStochastic, ErrorsCarryPathAndIndex) {
  const KernelTable t = ou(50);
  const ControllerFactory f = [](std::size_t i, const Vector&) -> std::unique_ptr<Controller> {
    if (i == 2) return std::make_unique<FailingControl>();
    return std::make_unique<ConstantControl>(Vector::Zero(2));
  };
  try {
    rollout_stochastic(t, f, std::vector<Vector>(4, vec2(0, 0)), 0.1, 1, ControllerTag::kLearnedFfn, 2);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("path 2, index 7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(rollout_stochastic(t, f, {}, 0.1, 1, ControllerTag::kLearnedFfn), InvalidArgument);
  EXPECT_THROW(rollout_stochastic(t, f, {vec2(0, 0)}, -1.0, 1, ControllerTag::kLearnedFfn), InvalidArgument);
}

TEST(RolloutDeterministic, ConstantControlOnTrivialSystem) {
  const KernelTable t =
      build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 4), TimeGrid(1.0, 1000));
  const ControllerFactory f = [](std::size_t, const Vector&) -> std::unique_ptr<Controller> {
    return std::make_unique<ConstantControl>(vec2(0, 1));
  };
  const auto ens = rollout_deterministic(t, f, {vec2(1, 0)}, ControllerTag::kLearnedFfn);
  EXPECT_LT((ens.paths[0].states.back() - vec2(1, 1)).norm(), 1e-12);
  EXPECT_EQ(ens.paths[0].controls.size(), 1001u);
}

TEST(RolloutDeterministic, TeacherControlsLandOnPairedTargets) {
  const KernelTable t = ou(1000);
  const auto mu0 = GaussianMixture::single(vec2(1, 0), 0.05 * Matrix::Identity(2, 2));
  const auto muf = ring_mixture(6, 1.0, 0.01, vec2(1, 1));
  const SamplePairSet pairs = product_pairs(mu0, muf, 200, 3);
  const CouplingPlan plan = ot_assignment(pairs.sources, pairs.targets);
  std::vector<Vector> paired;
  for (std::size_t i = 0; i < pairs.size(); ++i) paired.push_back(pairs.targets[plan.permutation[i]]);
  const auto ens =
      rollout_deterministic(t, deterministic_exact_factory(t, paired), pairs.sources, ControllerTag::kDeterministicExact);
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    worst = std::max(worst, (ens.paths[i].states.back() - paired[i]).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(RolloutDeterministic, GainFactoryWithExactGainMatchesTeacher) {
  const KernelTable t = ou(100);
  GainModel exact(2, 2, 4);  // zero head: predicts the output mean
  exact.input_norm = Standardizer::identity(1);
  exact.output_norm = Standardizer::identity(4);
  exact.output_norm.mean = Eigen::Map<const Vector>(t.gain(0).data(), 4);
  const auto ens = rollout_deterministic(t, gain_factory(exact, t, {vec2(1, 1)}), {vec2(1, 0)},
                                         ControllerTag::kGainModel);
  EXPECT_LT((ens.paths[0].controls[0] - t.gain(0) * (vec2(1, 1) - t.transition(100) * vec2(1, 0))).norm(), 1e-12);
}

TEST(PosteriorRollout, FactoryMatchesDirectSumController) {
  const KernelTable t = ou(100);
  const GaussianMixture mu0 = GaussianMixture::single(vec2(1, 0), 0.01 * Matrix::Identity(2, 2));
  const GaussianMixture muf = ring_mixture(3, 0.8, 0.02, vec2(1, 1));
  const MixturePosterior post(t, mu0, muf, 0.5);
  const auto x0 = sample(mu0, 20, 4);
  std::vector<std::vector<Vector>> means(20);
  const ControllerFactory recorder = [&](std::size_t i, const Vector& x) -> std::unique_ptr<Controller> {
    return std::make_unique<RecordingPosterior>(post, x, &means[i]);
  };
  const auto a = rollout_stochastic(t, posterior_exact_factory(post), x0, 0.5, 8, ControllerTag::kPosteriorExact);
  const auto b = rollout_stochastic(t, recorder, x0, 0.5, 8, ControllerTag::kPosteriorExact);
  EXPECT_LT(max_gap(a, b), 1e-12);
}

TEST(PosteriorRollout, PosteriorMeanIsMartingale) {
  const KernelTable t = ou(100);
  const GaussianMixture mu0 = GaussianMixture::single(vec2(1, 0), 0.01 * Matrix::Identity(2, 2));
  const GaussianMixture muf({{0.3, vec2(0.2, 1.5), 0.02 * Matrix::Identity(2, 2)},
                             {0.7, vec2(1.6, 0.8), 0.05 * Matrix::Identity(2, 2)}});
  const MixturePosterior post(t, mu0, muf, 0.5);
  const std::size_t n_paths = 5000;
  const auto x0 = sample(mu0, n_paths, 10);
  std::vector<std::vector<Vector>> means(n_paths);
  const ControllerFactory recorder = [&](std::size_t i, const Vector& x) -> std::unique_ptr<Controller> {
    return std::make_unique<RecordingPosterior>(post, x, &means[i]);
  };
  rollout_stochastic(t, recorder, x0, 0.5, 12, ControllerTag::kPosteriorExact);
  const Vector prior = muf.mean();
  double worst = 0.0;
  for (int j = 0; j < 100; ++j) {
    std::vector<Vector> at_j;
    for (const auto& m : means) at_j.push_back(m[static_cast<std::size_t>(j)]);
    const Vector mean = sample_mean(at_j);
    const Vector se = (sample_covariance(at_j).diagonal() / static_cast<double>(n_paths)).cwiseSqrt();
    // At t = 0 every path reports the prior mean, so the spread is rounding.
    for (int k = 0; k < 2; ++k) {
      const double dev = std::abs(mean(k) - prior(k));
      if (dev > 1e-12) worst = std::max(worst, dev / se(k));
    }
  }
  EXPECT_LT(worst, 3.0);
}

TEST(PosteriorRollout, SingleGaussianTargetLaw) {
  const KernelTable t = ou(200);
  const GaussianMixture mu0 = GaussianMixture::single(vec2(1, 0), 0.01 * Matrix::Identity(2, 2));
  const GaussianMixture muf = GaussianMixture::single(vec2(1, 1), 0.04 * Matrix::Identity(2, 2));
  const MixturePosterior post(t, mu0, muf, 0.5);
  const std::size_t n_paths = 3000;
  const auto ens = rollout_stochastic(t, posterior_exact_factory(post), sample(mu0, n_paths, 13), 0.5, 14,
                                      ControllerTag::kPosteriorExact);
  const auto terminal = ens.terminal_states();
  const Vector mean = sample_mean(terminal);
  const Matrix cov = sample_covariance(terminal);
  const Vector se = (cov.diagonal() / static_cast<double>(n_paths)).cwiseSqrt();
  for (int k = 0; k < 2; ++k) EXPECT_LT(std::abs(mean(k) - 1.0), 3.0 * se(k));
  const double rel = (cov - muf.covariance()).norm() / muf.covariance().norm();
  EXPECT_LE(rel, 0.10) << "terminal covariance\n" << cov;
}
