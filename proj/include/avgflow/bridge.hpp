#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "avgflow/kernel.hpp"
#include "avgflow/types.hpp"

namespace avgflow {

struct EndpointPair {
  Vector x0;
  Vector xf;
};

/// Increments dW_j ~ N(0, dt I_m) for j = 0..n_steps-1, drawn from the
/// counter-based stream (seed, stream).
struct BrownianPath {
  TimeGrid grid;
  std::vector<Vector> increments;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

BrownianPath sample_brownian(const TimeGrid& grid, int dim, std::uint64_t seed, std::uint64_t stream);

/// One averaged trajectory: states at every grid node, controls at the nodes
/// where they are defined (all nodes for deterministic paths, 0..n-1 for
/// stochastic ones, whose control blows up at t_f).
struct BridgePath {
  TimeGrid grid;
  std::vector<Vector> states;
  std::vector<Vector> controls;
  std::optional<BrownianPath> noise;
  double epsilon = 0.0;
};

/// Running inner integral D(t_j) = Σ_{k<j} G_{t_f,t_k}^{-1} Φ(t_f,t_k) dW_k.
struct VolterraState {
  Vector memory;
  std::vector<Vector> increments;

  static VolterraState zero(int dim_state) { return {Vector::Zero(dim_state), {}}; }
  int index() const { return static_cast<int>(increments.size()); }

  /// In-place form of advance_volterra.
  void advance(const KernelTable& table, int t_index, const Vector& dw);
};

/// K(t_j)(x_f - M(t_f) x_0): the minimum-energy averaged control.
Vector deterministic_control(const KernelTable& table, const EndpointPair& z, int t_index);

/// x^z(t_j) = M(t_j) x_0 + Z(t_j)(x_f - M(t_f) x_0).
BridgePath deterministic_trajectory(const KernelTable& table, const EndpointPair& z);

/// -√ε Φ(t_f,t)^T D(t) + K(t)(x_f - M(t_f) x_0). Throws
/// NearTerminalSingularity at t_index = n_steps.
Vector volterra_control(const KernelTable& table, const EndpointPair& z, const VolterraState& state,
                        int t_index, double epsilon);

VolterraState advance_volterra(const VolterraState& state, const KernelTable& table, int t_index,
                               const Vector& dw);

/// Pinned averaged process driven by `noise`. The drift double integral is
/// summed in its Fubini form ∫_0^t [∫_s^t Φ(t,τ)Φ(t_f,τ)^T dτ] G_{t_f,s}^{-1}
/// Φ(t_f,s) dW(s) with left-point sums in both variables; controls are the
/// adapted values volterra_control(·, t_j).
BridgePath volterra_trajectory(const KernelTable& table, const EndpointPair& z,
                               const BrownianPath& noise, double epsilon);

/// √ε Σ_{k<j} Φ(t_j,t_k) dW_k for every j = 0..n_steps.
std::vector<Vector> noise_convolution(const KernelTable& table, const std::vector<Vector>& increments,
                                      double epsilon);

}  // namespace avgflow
