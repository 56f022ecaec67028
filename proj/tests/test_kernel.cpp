#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "avgflow/errors.hpp"
#include "avgflow/kernel.hpp"
#include "oracles.hpp"

using namespace avgflow;

namespace {

Matrix rot(double a) {
  Matrix r(2, 2);
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

Matrix generator() {
  Matrix a(2, 2);
  a << 0.0, -1.0, 1.0, 0.0;
  return a;
}

}  // namespace

TEST(MatrixExponential, ZeroIsIdentity) {
  EXPECT_TRUE(matrix_exponential(Matrix::Zero(2, 2), 1.0).isApprox(Matrix::Identity(2, 2), 0.0));
}

TEST(MatrixExponential, QuarterRotation) {
  const Matrix e = matrix_exponential(generator(), std::numbers::pi / 2);
  Matrix expect(2, 2);
  expect << 0.0, -1.0, 1.0, 0.0;
  EXPECT_LT((e - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MatrixExponential, UnitRotationMatchesSeries) {
  const Matrix e = matrix_exponential(generator(), 1.0);
  const Matrix series = oracle::taylor_exp(generator());
  EXPECT_LT((e - series).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(e(0, 0), 0.540302, 1e-6);
  EXPECT_NEAR(e(0, 1), -0.841471, 1e-6);
  EXPECT_NEAR(e(1, 0), 0.841471, 1e-6);
  EXPECT_NEAR(e(1, 1), 0.540302, 1e-6);
}

TEST(MatrixExponential, RandomMatricesAgainstIndependentImplementation) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 5;
    Matrix a(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = nd(gen);
    const double t = 10.0 * (trial + 1) / 200.0 / std::max(1.0, a.norm());
    const Matrix ours = matrix_exponential(a, t);
    const Matrix ref = (a * t).exp();
    EXPECT_LE((ours - ref).norm(), 1e-12 * ref.norm()) << "trial " << trial;
  }
}

TEST(MatrixExponential, RotationAngles) {
  for (double t : {0.1, 1.0, 3.0, 7.5, 10.0}) {
    EXPECT_LT((matrix_exponential(generator(), t) - rot(t)).cwiseAbs().maxCoeff(), 1e-12) << t;
  }
}

TEST(MatrixExponential, NonFiniteInputThrows) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 1) = std::nan("");
  EXPECT_THROW(matrix_exponential(a, 1.0), InvalidArgument);
  EXPECT_THROW(matrix_exponential(Matrix::Identity(2, 2), INFINITY), InvalidArgument);
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  const QuadratureRule rule = gauss_legendre_unit(8);
  for (int p = 0; p <= 15; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * std::pow(rule.nodes[i], p);
    EXPECT_NEAR(s, 1.0 / (p + 1), 1e-14) << p;
  }
}

TEST(ThetaEnsemble, OuFamilySamples) {
  const ThetaEnsemble ens = build_theta_ensemble("ou2d", 64);
  ASSERT_EQ(ens.size(), 64u);
  double wsum = 0.0;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const double th = ens.theta_nodes[i];
    Matrix a(2, 2);
    a << 0.0, -th, th, 0.0;
    EXPECT_EQ(ens.a_samples[i], a);
    EXPECT_EQ(ens.b_samples[i], Matrix::Identity(2, 2));
    wsum += ens.theta_weights[i];
  }
  EXPECT_NEAR(wsum, 1.0, 1e-12);
  Matrix a_half(2, 2);
  a_half << 0.0, -0.5, 0.5, 0.0;
  // Closed form at θ = 0.5, as a node of an odd rule.
  const ThetaEnsemble odd = build_theta_ensemble("ou2d", 63);
  EXPECT_NEAR(odd.theta_nodes[31], 0.5, 1e-15);
  EXPECT_LT((odd.a_samples[31] - a_half).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ThetaEnsemble, AntidampedFamilySamples) {
  const ThetaEnsemble ens = build_theta_ensemble("antidamped2d", 64);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const double th = ens.theta_nodes[i];
    Matrix a(2, 2), b(2, 2);
    a << std::sin(th), std::cos(th), -std::cos(th), std::sin(th);
    b << 0.0, -th, th, 0.0;
    EXPECT_EQ(ens.a_samples[i], a);
    EXPECT_EQ(ens.b_samples[i], b);
  }
}

TEST(ThetaEnsemble, ConstantFamily) {
  const ThetaEnsemble ens = constant_ensemble(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 8);
  ASSERT_EQ(ens.size(), 8u);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    EXPECT_TRUE(ens.a_samples[i].isZero(0.0));
    EXPECT_EQ(ens.b_samples[i], Matrix::Identity(2, 2));
  }
}

TEST(ThetaEnsemble, Errors) {
  EXPECT_THROW(build_theta_ensemble("nonexistent", 64), ConfigError);
  EXPECT_THROW(build_theta_ensemble("ou2d", 1), ConfigError);
}

TEST(ThetaEnsemble, UserTable) {
  const char* text = R"({"dim_state": 2, "dim_control": 1, "nodes": [
    {"theta": 0.25, "weight": 0.5, "A": [0, 1, -1, 0], "B": [0, 1]},
    {"theta": 0.75, "weight": 0.5, "A": [[0, 2], [-2, 0]], "B": [[0], [1]]}]})";
  const ThetaEnsemble ens = parse_user_table(text);
  ASSERT_EQ(ens.size(), 2u);
  EXPECT_EQ(ens.a_samples[1](0, 1), 2.0);
  EXPECT_EQ(ens.b_samples[0](1, 0), 1.0);
  EXPECT_THROW(parse_user_table(R"({"dim_state": 2, "dim_control": 1, "nodes": []})"), ConfigError);
  EXPECT_THROW(parse_user_table(R"({"dim_state": 2, "dim_control": 1, "nodes": [
    {"theta": 0.5, "weight": 0.7, "A": [0, 1, -1, 0], "B": [0, 1]}]})"), ConfigError);
  EXPECT_THROW(parse_user_table("not json"), ConfigError);
}

TEST(TimeGrid, Nodes) {
  const TimeGrid g(1.0, 1000);
  EXPECT_EQ(g.node(0), 0.0);
  EXPECT_EQ(g.node(1000), 1.0);
  for (int j = 0; j < 1000; ++j) EXPECT_LT(g.node(j), g.node(j + 1));
  EXPECT_EQ(g.index_of(0.25), 250);
}

TEST(KernelTable, ConstantSystemClosedForms) {
  const KernelTable table = build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 8),
                                               TimeGrid(1.0, 100));
  const Matrix id = Matrix::Identity(2, 2);
  for (int j = 0; j <= 100; ++j) {
    const double t = table.grid().node(j);
    EXPECT_LT((table.phi(100, j) - id).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((table.transition(j) - id).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((table.gramian_backward(j) - (1.0 - t) * id).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((table.gain(j) - id).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(KernelTable, OuOracles) {
  const KernelTable table = build_kernel_table(build_theta_ensemble("ou2d", 64), TimeGrid(1.0, 1000));
  const Matrix m1 = oracle::ou_transition(1.0);
  EXPECT_LT((table.transition(1000) - m1).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(table.transition(1000)(0, 0), 0.841471, 1e-6);
  EXPECT_NEAR(table.transition(1000)(1, 0), 0.459698, 1e-6);
  const double g = oracle::ou_gramian_scalar(1.0);
  EXPECT_NEAR(g, 0.9727707, 1e-7);
  EXPECT_NEAR(table.gramian_forward(1000)(0, 0), g, 1e-5);
  EXPECT_NEAR(table.gramian_forward(1000)(1, 1), g, 1e-5);
  EXPECT_NEAR(table.gramian_forward(1000)(0, 1), 0.0, 1e-12);
  for (int lag : {0, 1, 250, 999, 1000}) {
    EXPECT_LT((table.phi_lag(lag) - oracle::ou_transition(table.grid().node(lag))).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(KernelTable, QuadratureConvergenceInTheta) {
  for (const char* family : {"ou2d", "antidamped2d"}) {
    const TimeGrid grid(1.0, 50);
    const KernelTable a = build_kernel_table(build_theta_ensemble(family, 64), grid);
    const KernelTable b = build_kernel_table(build_theta_ensemble(family, 128), grid);
    for (int lag = 0; lag <= 50; ++lag) {
      EXPECT_LE((a.phi_lag(lag) - b.phi_lag(lag)).cwiseAbs().maxCoeff(), 1e-9) << family << " " << lag;
    }
  }
}

TEST(KernelTable, ZeroLagIsMeanB) {
  const ThetaEnsemble ens = build_theta_ensemble("antidamped2d", 64);
  const KernelTable table = build_kernel_table(ens, TimeGrid(1.0, 20));
  for (int j = 0; j <= 20; ++j) EXPECT_LT((table.phi(j, j) - ens.mean_b()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(KernelTable, ReducesToClassicalGramian) {
  Matrix a(2, 2), b(2, 1);
  a << -0.3, 1.0, -1.0, 0.2;
  b << 0.0, 1.0;
  const int n = 1000;
  const KernelTable table = build_kernel_table(constant_ensemble(a, b, 4), TimeGrid(1.0, n));
  for (int j : {0, 100, 500, 1000}) {
    const double t = table.grid().node(j);
    EXPECT_LT((table.phi_lag(j) - (a * t).exp() * b).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((table.gramian_forward(j) - oracle::van_loan_gramian(a, b, t)).cwiseAbs().maxCoeff(), 1e-6) << j;
  }
}

TEST(KernelTable, StructuralInvariants) {
  for (const char* family : {"ou2d", "antidamped2d"}) {
    const KernelTable table = build_kernel_table(build_theta_ensemble(family, 64), TimeGrid(1.0, 1000));
    const Matrix id = Matrix::Identity(2, 2);
    EXPECT_LT((table.y(0) - id).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE(table.z(0).isZero(0.0));
    EXPECT_TRUE(table.cross_gramian(0).isZero(0.0));
    EXPECT_TRUE(table.gramian_forward(0).isZero(0.0));
    EXPECT_LE((table.cross_gramian(1000) - table.gramian_forward(1000)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((table.z(1000) - id).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(table.y(1000).cwiseAbs().maxCoeff(), 1e-8);
    for (int j = 0; j <= 1000; j += 37) {
      for (const Matrix* g : {&table.gramian_forward(j), &table.gramian_backward(j)}) {
        EXPECT_LE((*g - g->transpose()).cwiseAbs().maxCoeff(), 1e-10);
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(*g);
        EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
      }
    }
  }
}

TEST(KernelTable, Errors) {
  EXPECT_THROW(build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Zero(2, 2), 4), TimeGrid(1.0, 10)),
               NotAveragedControllable);
  Matrix b(2, 1);
  b << 1.0, 0.0;
  EXPECT_THROW(build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), b, 4), TimeGrid(1.0, 10)),
               NotAveragedControllable);
  EXPECT_THROW(build_kernel_table(build_theta_ensemble("ou2d", 8), TimeGrid(1.0, 1)), InvalidArgument);
  try {
    build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Zero(2, 2), 4), TimeGrid(1.0, 10));
  } catch (const NotAveragedControllable& e) {
    EXPECT_EQ(e.smallest_eigenvalue(), 0.0);
  }
}

TEST(SolveGramian, Examples) {
  const KernelTable trivial = build_kernel_table(constant_ensemble(Matrix::Zero(2, 2), Matrix::Identity(2, 2), 4),
                                                 TimeGrid(1.0, 10));
  const Vector x = solve_gramian(trivial, 5, Vector::Unit(2, 0));
  EXPECT_NEAR(x(0), 2.0, 1e-12);
  EXPECT_NEAR(x(1), 0.0, 1e-12);
  EXPECT_THROW(solve_gramian(trivial, 10, Vector::Ones(2)), NearTerminalSingularity);
  EXPECT_THROW(trivial.memory_kernel(10), NearTerminalSingularity);

  const KernelTable ou = build_kernel_table(build_theta_ensemble("ou2d", 64), TimeGrid(1.0, 1000));
  const Vector y = solve_gramian(ou, 0, Vector::Ones(2));
  EXPECT_NEAR(y(0), 1.027994, 1e-5);
  EXPECT_NEAR(y(1), 1.027994, 1e-5);
  EXPECT_LE((ou.gramian_backward(0) * y - Vector::Ones(2)).norm(), 1e-8 * std::sqrt(2.0));
  const Vector f = solve_gramian(ou, 1000, Vector::Ones(2), GramianKind::kForward);
  EXPECT_NEAR(f(0), 1.0 / oracle::ou_gramian_scalar(1.0), 2e-5);
}

TEST(KernelConvolution, MatchesDirectSum) {
  const KernelTable table = build_kernel_table(build_theta_ensemble("antidamped2d", 16), TimeGrid(1.0, 40));
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  KernelConvolution conv(table);
  std::vector<Vector> v;
  for (int k = 0; k < 40; ++k) {
    v.push_back(Vector::NullaryExpr(2, [&](Eigen::Index) { return nd(gen); }));
    conv.push(v.back());
  }
  for (int j = 0; j <= 40; ++j) {
    Vector direct = Vector::Zero(2);
    for (int k = 0; k < j; ++k) direct += table.phi(j, k) * v[k];
    EXPECT_LT((conv.value(j) - direct).norm(), 1e-12);
  }
  EXPECT_THROW(conv.push(v[0]), InvalidArgument);
}
