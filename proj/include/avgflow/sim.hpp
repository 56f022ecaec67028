#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "avgflow/bridge.hpp"
#include "avgflow/distributions.hpp"
#include "avgflow/kernel.hpp"
#include "avgflow/learn.hpp"
#include "avgflow/types.hpp"

namespace avgflow {

enum class ControllerTag {
  kDeterministicExact,
  kVolterraExact,
  kPosteriorExact,
  kLearnedFfn,
  kLearnedRnn,
  kGainModel,
};

const char* to_string(ControllerTag tag);

/// What a controller may observe at grid index j: the path's initial state,
/// the current state, the noise feature √ε Σ_{k<j} Φ(t_j,t_k) dW_k and the
/// bridge memory D(t_j).
struct StepContext {
  int index = 0;
  double t = 0.0;
  const Vector* x0 = nullptr;
  const Vector* state = nullptr;
  const Vector* noise_feature = nullptr;
  const VolterraState* volterra = nullptr;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual Vector control(const StepContext& ctx) = 0;
  /// Rollouts skip the O(j) noise feature unless a controller asks for it.
  virtual bool uses_noise_feature() const { return false; }
};

/// Builds the controller for one path (controllers may keep per-path state).
using ControllerFactory = std::function<std::unique_ptr<Controller>(std::size_t path_id, const Vector& x0)>;

/// K(t_j)(x_f^i - M(t_f) x_0^i) with x_f^i = targets[path_id].
ControllerFactory deterministic_exact_factory(const KernelTable& table, std::vector<Vector> targets);
/// Volterra bridge control towards targets[path_id].
ControllerFactory volterra_exact_factory(const KernelTable& table, std::vector<Vector> targets, double epsilon);
/// Closed-form mixture posterior control; `posterior` must outlive the rollout.
ControllerFactory posterior_exact_factory(const MixturePosterior& posterior);
ControllerFactory feedforward_factory(const FeedforwardModel& model);
ControllerFactory recurrent_factory(const RecurrentModel& model);
/// K̂(t_j)(x_f^i - M(t_f) x_0^i) with the learned gain.
ControllerFactory gain_factory(const GainModel& model, const KernelTable& table, std::vector<Vector> targets);

struct RolloutEnsemble {
  std::vector<BridgePath> paths;
  ControllerTag tag = ControllerTag::kDeterministicExact;
  double epsilon = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return paths.size(); }
  std::vector<Vector> states_at(int t_index) const;
  std::vector<Vector> terminal_states() const;
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// x(t_j) = M(t_j) x_0 + Σ_{k<j} Φ(t_j,t_k)(u_k dt + √ε dW_k) with the noise
/// of path i drawn from stream i of `seed`. Controls are evaluated at
/// indices 0..n-1. Controller errors are rethrown with path and index.
RolloutEnsemble rollout_stochastic(const KernelTable& table, const ControllerFactory& factory,
                                   const std::vector<Vector>& x0, double epsilon, std::uint64_t seed,
                                   ControllerTag tag, int threads = 1);

/// x(t_j) = M(t_j) x_0 + dt Σ_{k=0}^{j} w_k Φ(t_j,t_k) u_k with trapezoid
/// weights (w_0 = w_j = 1/2). Controllers see the state accumulated before
/// the u_j term.
RolloutEnsemble rollout_deterministic(const KernelTable& table, const ControllerFactory& factory,
                                      const std::vector<Vector>& x0, ControllerTag tag, int threads = 1);

}  // namespace avgflow
