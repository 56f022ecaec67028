#include "avgflow/kernel.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "avgflow/errors.hpp"

namespace avgflow {

namespace {

// Higham (2005), degree-13 Padé coefficients and its scaling threshold.
constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};
constexpr double kTheta13 = 5.371920351148152;

constexpr double kConditionLimit = 1e12;
constexpr double kJitterScale = 1e-10;

Matrix read_matrix(const nlohmann::json& node, int rows, int cols, const std::string& what) {
  Matrix m(rows, cols);
  if (!node.is_array()) throw ConfigError(what + " must be an array");
  if (!node.empty() && node[0].is_array()) {
    if (static_cast<int>(node.size()) != rows) throw ConfigError(what + " has wrong row count");
    for (int r = 0; r < rows; ++r) {
      if (static_cast<int>(node[r].size()) != cols) throw ConfigError(what + " has wrong column count");
      for (int c = 0; c < cols; ++c) m(r, c) = node[r][c].get<double>();
    }
    return m;
  }
  if (static_cast<int>(node.size()) != rows * cols) {
    throw ConfigError(fmt::format("{} needs {} row-major entries", what, rows * cols));
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = node[r * cols + c].get<double>();
  return m;
}

}  // namespace

Matrix matrix_exponential(const Matrix& a, double t) {
  if (a.rows() != a.cols()) throw InvalidArgument("matrix_exponential: matrix must be square");
  if (!a.allFinite() || !std::isfinite(t)) {
    throw InvalidArgument("matrix_exponential: non-finite input");
  }
  const Eigen::Index n = a.rows();
  const Matrix ident = Matrix::Identity(n, n);
  Matrix at = a * t;
  const double norm = at.cwiseAbs().colwise().sum().maxCoeff();
  if (norm == 0.0) return ident;

  int squarings = 0;
  if (norm > kTheta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / kTheta13)));
    at /= std::ldexp(1.0, squarings);
  }
  const auto& b = kPade13;
  const Matrix a2 = at * at;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                         b[3] * a2 + b[1] * ident;
  const Matrix u = at * u_inner;
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                   b[2] * a2 + b[0] * ident;
  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int s = 0; s < squarings; ++s) r = r * r;
  return r;
}

QuadratureRule gauss_legendre_unit(int n) {
  if (n < 1) throw InvalidArgument("gauss_legendre_unit: need at least one node");
  QuadratureRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z_prev = z;
      z = z_prev - p1 / pp;
      if (std::abs(z - z_prev) <= 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * pp * pp);
    // Map [-1, 1] to [0, 1].
    rule.nodes[i] = 0.5 * (1.0 - z);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + z);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

void ThetaEnsemble::validate() const {
  if (dim_state <= 0 || dim_control <= 0) throw InvalidArgument("ThetaEnsemble: dimensions must be positive");
  const std::size_t n = theta_nodes.size();
  if (n == 0) throw InvalidArgument("ThetaEnsemble: no quadrature nodes");
  if (theta_weights.size() != n || a_samples.size() != n || b_samples.size() != n) {
    throw InvalidArgument("ThetaEnsemble: node, weight and sample counts differ");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (theta_weights[i] < 0.0) throw InvalidArgument("ThetaEnsemble: negative weight");
    total += theta_weights[i];
    if (a_samples[i].rows() != dim_state || a_samples[i].cols() != dim_state) {
      throw InvalidArgument(fmt::format("ThetaEnsemble: A sample {} is not {}x{}", i, dim_state, dim_state));
    }
    if (b_samples[i].rows() != dim_state || b_samples[i].cols() != dim_control) {
      throw InvalidArgument(fmt::format("ThetaEnsemble: B sample {} is not {}x{}", i, dim_state, dim_control));
    }
    if (!a_samples[i].allFinite() || !b_samples[i].allFinite()) {
      throw InvalidArgument("ThetaEnsemble: non-finite sample");
    }
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InvalidArgument(fmt::format("ThetaEnsemble: weights sum to {:.17g}, expected 1", total));
  }
}

Matrix ThetaEnsemble::mean_b() const {
  Matrix out = Matrix::Zero(dim_state, dim_control);
  for (std::size_t i = 0; i < size(); ++i) out += theta_weights[i] * b_samples[i];
  return out;
}

namespace {

template <typename MakeA, typename MakeB>
ThetaEnsemble sample_family(std::string id, int d, int m, int n_theta, MakeA make_a, MakeB make_b) {
  if (n_theta < 2) throw ConfigError("n_theta must be at least 2");
  const QuadratureRule rule = gauss_legendre_unit(n_theta);
  ThetaEnsemble ens;
  ens.dim_state = d;
  ens.dim_control = m;
  ens.family_id = std::move(id);
  ens.theta_nodes = rule.nodes;
  ens.theta_weights = rule.weights;
  for (double theta : rule.nodes) {
    ens.a_samples.push_back(make_a(theta));
    ens.b_samples.push_back(make_b(theta));
  }
  return ens;
}

}  // namespace

ThetaEnsemble constant_ensemble(const Matrix& a, const Matrix& b, int n_theta) {
  if (a.rows() == 0 || a.rows() != a.cols()) throw ConfigError("constant family: A must be square and non-empty");
  if (b.rows() != a.rows() || b.cols() == 0) throw ConfigError("constant family: B must have as many rows as A");
  return sample_family("constant", static_cast<int>(a.rows()), static_cast<int>(b.cols()), n_theta,
                       [&](double) { return a; }, [&](double) { return b; });
}

ThetaEnsemble build_theta_ensemble(const FamilySpec& family, int n_theta) {
  if (family.id == "ou2d") {
    return sample_family(
        "ou2d", 2, 2, n_theta,
        [](double th) {
          Matrix a(2, 2);
          a << 0.0, -th, th, 0.0;
          return a;
        },
        [](double) { return Matrix::Identity(2, 2).eval(); });
  }
  if (family.id == "antidamped2d") {
    return sample_family(
        "antidamped2d", 2, 2, n_theta,
        [](double th) {
          Matrix a(2, 2);
          a << std::sin(th), std::cos(th), -std::cos(th), std::sin(th);
          return a;
        },
        [](double th) {
          Matrix b(2, 2);
          b << 0.0, -th, th, 0.0;
          return b;
        });
  }
  if (family.id == "constant") return constant_ensemble(family.a, family.b, n_theta);
  if (family.id == "user-table") return load_user_table(family.table);
  throw ConfigError(fmt::format("unknown system family '{}'", family.id));
}

ThetaEnsemble build_theta_ensemble(std::string_view family_id, int n_theta) {
  FamilySpec spec;
  spec.id = std::string(family_id);
  return build_theta_ensemble(spec, n_theta);
}

ThetaEnsemble parse_user_table(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("user table: ") + e.what());
  }
  try {
    ThetaEnsemble ens;
    ens.family_id = "user-table";
    ens.dim_state = doc.at("dim_state").get<int>();
    ens.dim_control = doc.at("dim_control").get<int>();
    const auto& nodes = doc.at("nodes");
    if (!nodes.is_array() || nodes.empty()) throw ConfigError("user table: 'nodes' must be a non-empty array");
    const double uniform = 1.0 / static_cast<double>(nodes.size());
    for (const auto& node : nodes) {
      ens.theta_nodes.push_back(node.at("theta").get<double>());
      ens.theta_weights.push_back(node.contains("weight") ? node["weight"].get<double>() : uniform);
      ens.a_samples.push_back(read_matrix(node.at("A"), ens.dim_state, ens.dim_state, "user table A"));
      ens.b_samples.push_back(read_matrix(node.at("B"), ens.dim_state, ens.dim_control, "user table B"));
    }
    try {
      ens.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    return ens;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("user table: ") + e.what());
  }
}

ThetaEnsemble load_user_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open user table '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_user_table(buf.str());
}

TimeGrid::TimeGrid(double t_final, int n_steps) : t_final_(t_final), n_steps_(n_steps) {
  if (!(t_final > 0.0) || !std::isfinite(t_final)) throw InvalidArgument("TimeGrid: t_f must be positive");
  if (n_steps < 1) throw InvalidArgument("TimeGrid: n_steps must be positive");
  dt_ = t_final / n_steps;
}

double TimeGrid::node(int j) const {
  if (j < 0 || j > n_steps_) throw InvalidArgument(fmt::format("TimeGrid: index {} out of range", j));
  if (j == n_steps_) return t_final_;
  return t_final_ * static_cast<double>(j) / static_cast<double>(n_steps_);
}

int TimeGrid::index_of(double t) const {
  const long j = std::lround(t / dt_);
  return static_cast<int>(std::clamp<long>(j, 0, n_steps_));
}

int KernelTable::check(int j) const {
  if (j < 0 || j > grid_.n_steps()) {
    throw InvalidArgument(fmt::format("KernelTable: index {} outside [0, {}]", j, grid_.n_steps()));
  }
  return j;
}

const Matrix& KernelTable::phi(int j, int k) const {
  check(j);
  check(k);
  if (k > j) throw InvalidArgument(fmt::format("KernelTable::phi: need k <= j, got ({}, {})", j, k));
  return phi_[j - k];
}

const Matrix& KernelTable::phi_lag(int lag) const { return phi_[check(lag)]; }

const Matrix& KernelTable::memory_kernel(int j) const {
  check(j);
  if (j == n_steps() || !memory_ok_[j]) {
    throw NearTerminalSingularity(
        fmt::format("G_(t_f,t) is singular at index {} (t = {})", j, grid_.node(j)), j);
  }
  return memory_kernel_[j];
}

Vector KernelTable::solve_terminal(const Vector& rhs) const {
  if (rhs.size() != dim_state_) throw InvalidArgument("solve_terminal: dimension mismatch");
  return terminal_inverse_ * rhs;
}

namespace {

struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

bool factor_spd_with_jitter(const Matrix& g, SpdFactor* out) {
  if (g.rows() == 0 || g.rows() != g.cols() || !g.allFinite()) return false;
  const Matrix sym = 0.5 * (g + g.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0.0)) return false;
  Matrix work = sym;
  double jitter = 0.0;
  if (lmin <= lmax / kConditionLimit) {
    jitter = kJitterScale * sym.trace() / static_cast<double>(sym.rows());
    if (!(jitter > 0.0)) return false;
    if ((lmax + jitter) / (lmin + jitter) > kConditionLimit || lmin + jitter <= 0.0) return false;
    work.diagonal().array() += jitter;
  }
  out->llt.compute(work);
  out->jitter = jitter;
  return out->llt.info() == Eigen::Success;
}

}  // namespace

bool invert_spd_with_jitter(const Matrix& g, Matrix* inverse, double* log_det) {
  SpdFactor f;
  if (!factor_spd_with_jitter(g, &f)) return false;
  *inverse = f.llt.solve(Matrix::Identity(g.rows(), g.cols()));
  if (log_det != nullptr) {
    const Matrix& l = f.llt.matrixLLT();
    double s = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
    *log_det = 2.0 * s;
  }
  return true;
}

Vector solve_gramian(const KernelTable& table, int index, const Vector& rhs, GramianKind kind) {
  if (rhs.size() != table.dim_state()) throw InvalidArgument("solve_gramian: dimension mismatch");
  const Matrix& g =
      kind == GramianKind::kBackward ? table.gramian_backward(index) : table.gramian_forward(index);
  SpdFactor f;
  if (!factor_spd_with_jitter(g, &f)) {
    throw NearTerminalSingularity(
        fmt::format("Gramian at index {} is singular even after jitter", index), index);
  }
  return f.llt.solve(rhs);
}

KernelTable build_kernel_table(const ThetaEnsemble& ensemble, const TimeGrid& grid) {
  ensemble.validate();
  const int n = grid.n_steps();
  if (n < 2) throw InvalidArgument("build_kernel_table: need at least 2 steps");
  const int d = ensemble.dim_state;
  const int m = ensemble.dim_control;
  const double dt = grid.dt();

  KernelTable table;
  table.grid_ = grid;
  table.dim_state_ = d;
  table.dim_control_ = m;
  table.phi_.assign(n + 1, Matrix::Zero(d, m));
  table.transition_.assign(n + 1, Matrix::Zero(d, d));

  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const double w = ensemble.theta_weights[i];
    const Matrix& a = ensemble.a_samples[i];
    const Matrix& b = ensemble.b_samples[i];
    for (int lag = 0; lag <= n; ++lag) {
      const Matrix e = matrix_exponential(a, grid.node(lag));
      table.transition_[lag] += w * e;
      table.phi_[lag] += w * (e * b);
    }
  }

  table.phi_wide_.resize(d, static_cast<Eigen::Index>(m) * n);
  for (int lag = 1; lag <= n; ++lag) table.phi_wide_.middleCols((lag - 1) * m, m) = table.phi_[lag];

  std::vector<Matrix> outer(n + 1);
  for (int lag = 0; lag <= n; ++lag) outer[lag] = table.phi_[lag] * table.phi_[lag].transpose();

  // G_{t_j,0} = ∫_0^{t_j} Φ(s) Φ(s)^T ds, composite trapezoid over the lag.
  table.gramian_fwd_.assign(n + 1, Matrix::Zero(d, d));
  for (int j = 1; j <= n; ++j) {
    Matrix g = table.gramian_fwd_[j - 1] + 0.5 * dt * (outer[j - 1] + outer[j]);
    table.gramian_fwd_[j] = 0.5 * (g + g.transpose());
  }

  table.cross_.assign(n + 1, Matrix::Zero(d, d));
  for (int j = 1; j <= n; ++j) {
    Matrix s = Matrix::Zero(d, d);
    for (int k = 0; k <= j; ++k) {
      const double w = (k == 0 || k == j) ? 0.5 : 1.0;
      s.noalias() += w * table.phi_[j - k] * table.phi_[n - k].transpose();
    }
    table.cross_[j] = dt * s;
  }

  const Matrix& terminal = table.gramian_fwd_[n];
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(terminal, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  const double cond = (lmin > 0.0) ? lmax / lmin : std::numeric_limits<double>::infinity();
  table.terminal_min_eig_ = lmin;
  table.terminal_condition_ = cond;
  if (!(lmax > 0.0) || !(cond <= kConditionLimit)) {
    throw NotAveragedControllable(
        fmt::format("system '{}' is not averaged controllable on [0, {}]: G_(t_f,0) has smallest "
                    "eigenvalue {:.6g} and condition number {:.6g}",
                    ensemble.family_id, grid.t_final(), lmin, cond),
        lmin, cond);
  }
  if (!invert_spd_with_jitter(terminal, &table.terminal_inverse_)) {
    throw NotAveragedControllable("G_(t_f,0) could not be factored", lmin, cond);
  }

  const Matrix& ginv = table.terminal_inverse_;
  const Matrix& m_final = table.transition_[n];
  table.y_.resize(n + 1);
  table.z_.resize(n + 1);
  table.gain_.resize(n + 1);
  for (int j = 0; j <= n; ++j) {
    table.z_[j] = table.cross_[j] * ginv;
    table.y_[j] = table.transition_[j] - table.z_[j] * m_final;
    table.gain_[j] = table.phi_[n - j].transpose() * ginv;
  }

  table.memory_kernel_.assign(n + 1, Matrix::Zero(d, m));
  table.memory_ok_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j) {
    Matrix inv;
    if (invert_spd_with_jitter(table.gramian_fwd_[n - j], &inv)) {
      table.memory_kernel_[j] = inv * table.phi_[n - j];
      table.memory_ok_[j] = 1;
    }
  }
  return table;
}

KernelConvolution::KernelConvolution(const KernelTable& table)
    : table_(&table), reversed_(Vector::Zero(static_cast<Eigen::Index>(table.dim_control()) * table.n_steps())) {}

void KernelConvolution::push(const Vector& v) {
  const int n = table_->n_steps();
  const int m = table_->dim_control();
  if (count_ >= n) throw InvalidArgument("KernelConvolution: more values than grid steps");
  if (v.size() != m) throw InvalidArgument("KernelConvolution: value dimension");
  reversed_.segment(static_cast<Eigen::Index>(n - 1 - count_) * m, m) = v;
  ++count_;
}

Vector KernelConvolution::value(int j) const {
  if (j < 0 || j > count_) throw InvalidArgument("KernelConvolution: index beyond the pushed values");
  const int n = table_->n_steps();
  const int m = table_->dim_control();
  if (j == 0) return Vector::Zero(table_->dim_state());
  const Eigen::Index len = static_cast<Eigen::Index>(j) * m;
  return table_->phi_wide().leftCols(len) * reversed_.segment(static_cast<Eigen::Index>(n - j) * m, len);
}

}  // namespace avgflow
