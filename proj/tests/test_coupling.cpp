#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "avgflow/bridge.hpp"
#include "avgflow/coupling.hpp"
#include "avgflow/errors.hpp"
#include "avgflow/kernel.hpp"

using namespace avgflow;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

std::vector<Vector> random_points(std::mt19937_64& gen, std::size_t n, int d) {
  std::normal_distribution<double> normal;
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n; ++i) {
    Vector v(d);
    for (int k = 0; k < d; ++k) v(k) = normal(gen);
    out.push_back(v);
  }
  return out;
}

double brute_force_cost(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += (a[i] - b[perm[i]]).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

bool is_permutation(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> s = p;
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != i) return false;
  }
  return true;
}

}  // namespace

TEST(OtAssignment, PerfectSwap) {
  const CouplingPlan p = ot_assignment({vec2(0, 0), vec2(1, 0)}, {vec2(1, 0), vec2(0, 0)});
  EXPECT_EQ(p.permutation, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(p.total_cost, 0.0);
}

TEST(OtAssignment, MatchesExhaustiveSearch) {
  std::mt19937_64 gen(2024);
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t n = 1 + instance % 7;
    const int d = 1 + instance % 3;
    const auto a = random_points(gen, n, d);
    const auto b = random_points(gen, n, d);
    const CouplingPlan p = ot_assignment(a, b);
    ASSERT_TRUE(is_permutation(p.permutation));
    EXPECT_NEAR(p.total_cost, brute_force_cost(a, b), 1e-12) << instance;
    EXPECT_NEAR(p.total_cost, assignment_cost(a, b, p.permutation), 1e-12);
    double sum = 0.0;
    for (double c : p.costs) sum += c;
    EXPECT_NEAR(sum, p.total_cost, 1e-12);
  }
}

TEST(OtAssignment, BeatsRandomPermutations) {
  std::mt19937_64 gen(7);
  const auto a = random_points(gen, 60, 2);
  const auto b = random_points(gen, 60, 2);
  const CouplingPlan p = ot_assignment(a, b);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  EXPECT_LE(p.total_cost, assignment_cost(a, b, perm) + 1e-12);
  for (int r = 0; r < 1000; ++r) {
    std::shuffle(perm.begin(), perm.end(), gen);
    EXPECT_LE(p.total_cost, assignment_cost(a, b, perm) + 1e-12);
  }
}

TEST(OtAssignment, MonotoneInOneDimension) {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<double> xs(40), ys(40);
    for (auto& x : xs) x = u(gen);
    for (auto& y : ys) y = u(gen);
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    std::vector<Vector> a, b;
    for (double x : xs) a.push_back(Vector::Constant(1, x));
    for (double y : ys) b.push_back(Vector::Constant(1, y));
    const CouplingPlan p = ot_assignment(a, b);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(p.permutation[i], i);
  }
}

TEST(OtAssignment, TiesGoToLowestIndex) {
  // Every pairing costs the same; the lowest-index rule gives the identity.
  const std::vector<Vector> a(4, vec2(0, 0));
  const std::vector<Vector> b(4, vec2(1, 1));
  EXPECT_EQ(ot_assignment(a, b).permutation, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(OtAssignment, Errors) {
  EXPECT_THROW(ot_assignment({vec2(0, 0)}, {vec2(0, 0), vec2(1, 1)}), InvalidArgument);
  EXPECT_THROW(ot_assignment({}, {}), InvalidArgument);
  EXPECT_THROW(ot_assignment({vec2(0, 0), vec2(1, 0)}, {vec2(0, 0), vec2(1, 1)}, 1), InvalidArgument);
}

TEST(TeacherControls, TrivialSystem) {
  const KernelTable t =
      build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 4), TimeGrid(1.0, 100));
  const std::vector<Vector> src{vec2(1, 0)}, dst{vec2(1, 1)};
  const TeacherSet ts = teacher_controls(t, ot_assignment(src, dst), src, dst);
  for (int j = 0; j <= 100; ++j) EXPECT_LT((ts.control(0, j) - vec2(0, 1)).norm(), 1e-12);
}

TEST(TeacherControls, ZeroResidualAndCrossModuleEquality) {
  const KernelTable t = build_kernel_table(build_theta_ensemble("ou2d", 32), TimeGrid(1.0, 200));
  const std::vector<Vector> src{vec2(1, 0), vec2(0.3, 0.2)};
  const std::vector<Vector> dst{vec2(1, 1), t.transition(200) * vec2(0.3, 0.2)};
  CouplingPlan identity;
  identity.permutation = {0, 1};
  const TeacherSet ts = teacher_controls(t, identity, src, dst);
  for (int j = 0; j <= 200; ++j) {
    EXPECT_EQ(ts.control(0, j), deterministic_control(t, {src[0], dst[0]}, j));
    EXPECT_LT(ts.control(1, j).norm(), 1e-14);
  }
  CouplingPlan bad;
  bad.permutation = {0, 0};
  EXPECT_THROW(teacher_controls(t, bad, src, dst), InvalidArgument);
}
