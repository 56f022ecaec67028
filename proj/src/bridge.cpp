#include "avgflow/bridge.hpp"

#include <cmath>

#include <fmt/format.h>

#include "avgflow/errors.hpp"
#include "avgflow/rng.hpp"

namespace avgflow {

namespace {

void check_endpoints(const KernelTable& table, const EndpointPair& z) {
  if (z.x0.size() != table.dim_state() || z.xf.size() != table.dim_state()) {
    throw InvalidArgument("endpoint dimension does not match the system");
  }
  if (!z.x0.allFinite() || !z.xf.allFinite()) throw InvalidArgument("endpoints must be finite");
}

Vector residual(const KernelTable& table, const EndpointPair& z) {
  return z.xf - table.transition(table.n_steps()) * z.x0;
}

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be >= 0");
}

}  // namespace

BrownianPath sample_brownian(const TimeGrid& grid, int dim, std::uint64_t seed, std::uint64_t stream) {
  BrownianPath path;
  path.grid = grid;
  path.seed = seed;
  path.stream = stream;
  path.increments.reserve(grid.n_steps());
  GaussianStream gauss(seed, stream);
  const double scale = std::sqrt(grid.dt());
  for (int j = 0; j < grid.n_steps(); ++j) path.increments.push_back(scale * gauss.next(dim));
  return path;
}

void VolterraState::advance(const KernelTable& table, int t_index, const Vector& dw) {
  if (dw.size() != table.dim_control()) throw InvalidArgument("advance_volterra: increment dimension");
  if (memory.size() != table.dim_state()) throw InvalidArgument("advance_volterra: memory dimension");
  memory.noalias() += table.memory_kernel(t_index) * dw;
  increments.push_back(dw);
}

VolterraState advance_volterra(const VolterraState& state, const KernelTable& table, int t_index,
                               const Vector& dw) {
  VolterraState next = state;
  next.advance(table, t_index, dw);
  return next;
}

Vector deterministic_control(const KernelTable& table, const EndpointPair& z, int t_index) {
  check_endpoints(table, z);
  return table.gain(t_index) * residual(table, z);
}

BridgePath deterministic_trajectory(const KernelTable& table, const EndpointPair& z) {
  check_endpoints(table, z);
  const int n = table.n_steps();
  const Vector delta = residual(table, z);
  BridgePath path;
  path.grid = table.grid();
  path.states.reserve(n + 1);
  path.controls.reserve(n + 1);
  for (int j = 0; j <= n; ++j) {
    path.states.push_back(table.transition(j) * z.x0 + table.z(j) * delta);
    path.controls.push_back(table.gain(j) * delta);
  }
  // Z(0) = 0 and M(0) = I hold exactly, so this only removes rounding.
  path.states.front() = z.x0;
  return path;
}

Vector volterra_control(const KernelTable& table, const EndpointPair& z, const VolterraState& state,
                        int t_index, double epsilon) {
  check_endpoints(table, z);
  check_epsilon(epsilon);
  if (t_index == table.n_steps()) {
    throw NearTerminalSingularity("the bridge control is undefined at t_f", t_index);
  }
  Vector u = table.gain(t_index) * residual(table, z);
  if (epsilon > 0.0) {
    const Matrix& phi_f = table.phi(table.n_steps(), t_index);
    u.noalias() -= std::sqrt(epsilon) * (phi_f.transpose() * state.memory);
  }
  return u;
}

std::vector<Vector> noise_convolution(const KernelTable& table, const std::vector<Vector>& increments,
                                      double epsilon) {
  const int n = table.n_steps();
  if (static_cast<int>(increments.size()) < n) throw InvalidArgument("noise_convolution: too few increments");
  std::vector<Vector> out(n + 1, Vector::Zero(table.dim_state()));
  const double scale = std::sqrt(epsilon);
  KernelConvolution conv(table);
  for (int k = 0; k < n; ++k) conv.push(increments[k]);
  for (int j = 1; j <= n; ++j) out[j] = scale * conv.value(j);
  return out;
}

BridgePath volterra_trajectory(const KernelTable& table, const EndpointPair& z,
                               const BrownianPath& noise, double epsilon) {
  check_endpoints(table, z);
  check_epsilon(epsilon);
  const int n = table.n_steps();
  if (!(noise.grid == table.grid()) || static_cast<int>(noise.increments.size()) != n) {
    throw InvalidArgument("volterra_trajectory: noise is not on the kernel grid");
  }
  BridgePath path = deterministic_trajectory(table, z);
  path.noise = noise;
  path.epsilon = epsilon;
  path.controls.clear();

  const int d = table.dim_state();
  const double dt = table.grid().dt();
  const double root_eps = std::sqrt(epsilon);

  // D(t_k) before and after the increment at t_k.
  VolterraState state = VolterraState::zero(d);
  KernelConvolution drive(table);
  for (int k = 0; k < n; ++k) {
    path.controls.push_back(volterra_control(table, z, state, k, epsilon));
    state.advance(table, k, noise.increments[k]);
    // dW_k - Φ(t_f,t_k)^T D(t_{k+1}) dt: the Fubini form of the drift
    // integral picks up the increment at t_k inside ∫_{t_k}^{t} dτ.
    drive.push(noise.increments[k] - table.phi(n, k).transpose() * state.memory * dt);
  }
  if (epsilon == 0.0) return path;

  for (int j = 1; j <= n; ++j) path.states[j] += root_eps * drive.value(j);
  return path;
}

}  // namespace avgflow
