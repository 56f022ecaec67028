#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "avgflow/types.hpp"

namespace avgflow {

/// e^{A t} by scaling and squaring with the degree-13 diagonal Padé
/// approximant. Throws InvalidArgument on non-finite input.
Matrix matrix_exponential(const Matrix& a, double t);

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss–Legendre rule mapped to [0, 1]; weights sum to one.
QuadratureRule gauss_legendre_unit(int n);

/// Parameterized family A(θ), B(θ) sampled at quadrature nodes θ_i with
/// weights w_i, so that ∫_0^1 f(θ) dθ ≈ Σ_i w_i f(θ_i).
struct ThetaEnsemble {
  int dim_state = 0;
  int dim_control = 0;
  std::vector<double> theta_nodes;
  std::vector<double> theta_weights;
  std::vector<Matrix> a_samples;
  std::vector<Matrix> b_samples;
  std::string family_id;

  std::size_t size() const { return theta_nodes.size(); }
  /// Throws InvalidArgument when shapes or weights are inconsistent.
  void validate() const;
  Matrix mean_b() const;
};

/// Selects one of the built-in families. `a`/`b` are only read for
/// "constant", `table` only for "user-table".
struct FamilySpec {
  std::string id;
  Matrix a;
  Matrix b;
  std::filesystem::path table;
};

ThetaEnsemble build_theta_ensemble(const FamilySpec& family, int n_theta);
ThetaEnsemble build_theta_ensemble(std::string_view family_id, int n_theta);
ThetaEnsemble constant_ensemble(const Matrix& a, const Matrix& b, int n_theta);

/// Reads a user table: {"dim_state", "dim_control", "nodes": [{"theta",
/// "weight" (optional), "A": row-major, "B": row-major}, ...]}. Missing
/// weights default to 1/n.
ThetaEnsemble load_user_table(const std::filesystem::path& path);
ThetaEnsemble parse_user_table(std::string_view text);

class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double t_final, int n_steps);

  double t_final() const { return t_final_; }
  int n_steps() const { return n_steps_; }
  double dt() const { return dt_; }
  double node(int j) const;
  /// Nearest grid index to time t.
  int index_of(double t) const;

  bool operator==(const TimeGrid& other) const {
    return t_final_ == other.t_final_ && n_steps_ == other.n_steps_;
  }

 private:
  double t_final_ = 1.0;
  int n_steps_ = 1;
  double dt_ = 1.0;
};

enum class GramianKind {
  kBackward,  // G_{t_f, t_j}
  kForward,   // G_{t_j, 0}
};

/// Precomputed deterministic functions of the averaged system on a uniform
/// grid. Immutable once built and safe to share across threads.
///
/// The kernel Φ(t, τ) = Σ_i w_i e^{A_i (t-τ)} B_i only depends on the lag
/// t - τ, so it is stored once per lag; phi(j, k) indexes it as a table.
class KernelTable {
 public:
  const TimeGrid& grid() const { return grid_; }
  int dim_state() const { return dim_state_; }
  int dim_control() const { return dim_control_; }
  int n_steps() const { return grid_.n_steps(); }

  /// Φ(t_j, t_k) for k <= j.
  const Matrix& phi(int j, int k) const;
  /// Φ at lag ℓ·dt.
  const Matrix& phi_lag(int lag) const;
  /// [Φ(dt) Φ(2dt) ... Φ(n dt)] side by side, d x (m·n).
  const Matrix& phi_wide() const { return phi_wide_; }
  /// M(t_j) = ∫ e^{A(θ) t_j} dθ.
  const Matrix& transition(int j) const { return at(transition_, j); }
  /// G_{t_j, 0}.
  const Matrix& gramian_forward(int j) const { return at(gramian_fwd_, j); }
  /// G_{t_f, t_j} = ∫_{t_j}^{t_f} Φ(t_f, τ) Φ(t_f, τ)^T dτ.
  const Matrix& gramian_backward(int j) const { return at(gramian_fwd_, n_steps() - check(j)); }
  /// S(t_j) = ∫_0^{t_j} Φ(t_j, τ) Φ(t_f, τ)^T dτ.
  const Matrix& cross_gramian(int j) const { return at(cross_, j); }
  const Matrix& y(int j) const { return at(y_, j); }
  const Matrix& z(int j) const { return at(z_, j); }
  /// K(t_j) = Φ(t_f, t_j)^T G_{t_f,0}^{-1}.
  const Matrix& gain(int j) const { return at(gain_, j); }
  /// G_{t_f,t_j}^{-1} Φ(t_f, t_j), the integrand of the bridge memory.
  /// Throws NearTerminalSingularity for j = n_steps.
  const Matrix& memory_kernel(int j) const;

  /// G_{t_f,0}^{-1} rhs.
  Vector solve_terminal(const Vector& rhs) const;
  const Matrix& terminal_gramian_inverse() const { return terminal_inverse_; }

  double terminal_condition_number() const { return terminal_condition_; }
  double terminal_smallest_eigenvalue() const { return terminal_min_eig_; }

 private:
  friend KernelTable build_kernel_table(const ThetaEnsemble&, const TimeGrid&);

  int check(int j) const;
  const Matrix& at(const std::vector<Matrix>& v, int j) const { return v[check(j)]; }

  TimeGrid grid_;
  int dim_state_ = 0;
  int dim_control_ = 0;
  std::vector<Matrix> phi_;  // by lag
  Matrix phi_wide_;
  std::vector<Matrix> transition_;
  std::vector<Matrix> gramian_fwd_;
  std::vector<Matrix> cross_;
  std::vector<Matrix> y_;
  std::vector<Matrix> z_;
  std::vector<Matrix> gain_;
  std::vector<Matrix> memory_kernel_;
  std::vector<char> memory_ok_;
  Matrix terminal_inverse_;
  double terminal_condition_ = 0.0;
  double terminal_min_eig_ = 0.0;
};

/// Causal sums Σ_{k<j} Φ(t_j, t_k) v_k over values v_0, v_1, ... pushed in
/// time order. Each evaluation is a single dense product.
class KernelConvolution {
 public:
  explicit KernelConvolution(const KernelTable& table);

  void push(const Vector& v);
  int size() const { return count_; }
  /// Sum at index j <= size(), using v_0..v_{j-1}.
  Vector value(int j) const;
  Vector value() const { return value(count_); }

 private:
  const KernelTable* table_;
  Vector reversed_;  // v_k stored at block n-1-k
  int count_ = 0;
};

/// Throws NotAveragedControllable when G_{t_f,0} has condition number above
/// 1e12 (or vanishes).
KernelTable build_kernel_table(const ThetaEnsemble& ensemble, const TimeGrid& grid);

/// Solves G x = rhs for the referenced Gramian by Cholesky, adding jitter
/// 1e-10·tr(G)/d when G is numerically singular. Throws
/// NearTerminalSingularity when the Gramian vanishes.
Vector solve_gramian(const KernelTable& table, int index, const Vector& rhs,
                     GramianKind kind = GramianKind::kBackward);

/// Inverse of a symmetric positive semidefinite matrix with the same jitter
/// policy. Returns false when the matrix vanishes or stays singular.
bool invert_spd_with_jitter(const Matrix& g, Matrix* inverse, double* log_det = nullptr);

}  // namespace avgflow
