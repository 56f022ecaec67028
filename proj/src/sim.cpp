#include "avgflow/sim.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "avgflow/errors.hpp"

namespace avgflow {

const char* to_string(ControllerTag tag) {
  switch (tag) {
    case ControllerTag::kDeterministicExact: return "deterministic-exact";
    case ControllerTag::kVolterraExact: return "volterra-exact";
    case ControllerTag::kPosteriorExact: return "posterior-exact";
    case ControllerTag::kLearnedFfn: return "learned-ffn";
    case ControllerTag::kLearnedRnn: return "learned-rnn";
    case ControllerTag::kGainModel: return "gain-model";
  }
  return "unknown";
}

namespace {

const Vector& target_for(const std::vector<Vector>& targets, std::size_t path_id) {
  if (path_id >= targets.size()) throw InvalidArgument(fmt::format("no target for path {}", path_id));
  return targets[path_id];
}

class DeterministicExact : public Controller {
 public:
  DeterministicExact(const KernelTable& table, Vector x0, Vector xf) : table_(table), z_{std::move(x0), std::move(xf)} {}
  Vector control(const StepContext& ctx) override { return deterministic_control(table_, z_, ctx.index); }

 private:
  const KernelTable& table_;
  EndpointPair z_;
};

class VolterraExact : public Controller {
 public:
  VolterraExact(const KernelTable& table, Vector x0, Vector xf, double eps)
      : table_(table), z_{std::move(x0), std::move(xf)}, eps_(eps) {}
  Vector control(const StepContext& ctx) override {
    return volterra_control(table_, z_, *ctx.volterra, ctx.index, eps_);
  }

 private:
  const KernelTable& table_;
  EndpointPair z_;
  double eps_;
};

class PosteriorExact : public Controller {
 public:
  PosteriorExact(const MixturePosterior& posterior, const Vector& x0)
      : ctx_(posterior, x0), drift_(posterior.table()) {}

  Vector control(const StepContext& step) override {
    const KernelTable& table = ctx_.posterior->table();
    const int n = table.n_steps();
    const double eps = ctx_.posterior->epsilon();
    if (drift_.size() != step.index) throw InvalidArgument("posterior controller called out of order");
    ctx_.state = *step.state;
    // E(R_ε(t_j)) from the stored memory values D(t_0..t_{j-1}).
    ctx_.mean_r = eps > 0.0 ? Vector(-std::sqrt(eps) * table.grid().dt() * drift_.value(step.index))
                            : Vector::Zero(table.dim_state());
    Vector u = posterior_control(ctx_, *step.volterra, step.index);
    drift_.push(table.phi(n, step.index).transpose() * step.volterra->memory);
    return u;
  }

 private:
  PosteriorContext ctx_;
  KernelConvolution drift_;
};

class Feedforward : public Controller {
 public:
  explicit Feedforward(const FeedforwardModel& model) : model_(model) {}
  Vector control(const StepContext& ctx) override { return model_.predict(*ctx.x0, ctx.t); }

 private:
  const FeedforwardModel& model_;
};

class Recurrent : public Controller {
 public:
  explicit Recurrent(const RecurrentModel& model) : stepper_(model.stepper()) {}
  Vector control(const StepContext& ctx) override { return stepper_.step(*ctx.x0, ctx.t, *ctx.noise_feature); }
  bool uses_noise_feature() const override { return true; }

 private:
  RecurrentModel::Stepper stepper_;
};

class Gain : public Controller {
 public:
  Gain(const GainModel& model, Vector residual) : model_(model), residual_(std::move(residual)) {}
  Vector control(const StepContext& ctx) override { return model_.predict(ctx.t) * residual_; }

 private:
  const GainModel& model_;
  Vector residual_;
};

void check_inputs(const KernelTable& table, const std::vector<Vector>& x0) {
  if (x0.empty()) throw InvalidArgument("rollout: no initial states");
  for (const Vector& x : x0) {
    if (x.size() != table.dim_state() || !x.allFinite()) throw InvalidArgument("rollout: bad initial state");
  }
}

}  // namespace

ControllerFactory deterministic_exact_factory(const KernelTable& table, std::vector<Vector> targets) {
  return [&table, targets = std::move(targets)](std::size_t i, const Vector& x0) -> std::unique_ptr<Controller> {
    return std::make_unique<DeterministicExact>(table, x0, target_for(targets, i));
  };
}

ControllerFactory volterra_exact_factory(const KernelTable& table, std::vector<Vector> targets, double epsilon) {
  return [&table, targets = std::move(targets), epsilon](std::size_t i, const Vector& x0) -> std::unique_ptr<Controller> {
    return std::make_unique<VolterraExact>(table, x0, target_for(targets, i), epsilon);
  };
}

ControllerFactory posterior_exact_factory(const MixturePosterior& posterior) {
  return [&posterior](std::size_t, const Vector& x0) -> std::unique_ptr<Controller> {
    return std::make_unique<PosteriorExact>(posterior, x0);
  };
}

ControllerFactory feedforward_factory(const FeedforwardModel& model) {
  return [&model](std::size_t, const Vector&) -> std::unique_ptr<Controller> {
    return std::make_unique<Feedforward>(model);
  };
}

ControllerFactory recurrent_factory(const RecurrentModel& model) {
  return [&model](std::size_t, const Vector&) -> std::unique_ptr<Controller> {
    return std::make_unique<Recurrent>(model);
  };
}

ControllerFactory gain_factory(const GainModel& model, const KernelTable& table, std::vector<Vector> targets) {
  return [&model, &table, targets = std::move(targets)](std::size_t i, const Vector& x0) -> std::unique_ptr<Controller> {
    return std::make_unique<Gain>(model, target_for(targets, i) - table.transition(table.n_steps()) * x0);
  };
}

std::vector<Vector> RolloutEnsemble::states_at(int t_index) const {
  std::vector<Vector> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(p.states.at(static_cast<std::size_t>(t_index)));
  return out;
}

std::vector<Vector> RolloutEnsemble::terminal_states() const {
  std::vector<Vector> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(p.states.back());
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

RolloutEnsemble rollout_stochastic(const KernelTable& table, const ControllerFactory& factory,
                                   const std::vector<Vector>& x0, double epsilon, std::uint64_t seed,
                                   ControllerTag tag, int threads) {
  check_inputs(table, x0);
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("rollout: epsilon must be >= 0");
  const int n = table.n_steps();
  const int d = table.dim_state();
  const double dt = table.grid().dt();
  const double root_eps = std::sqrt(epsilon);

  RolloutEnsemble ens;
  ens.tag = tag;
  ens.epsilon = epsilon;
  ens.seed = seed;
  ens.paths.resize(x0.size());
  parallel_for(x0.size(), threads, [&](std::size_t i) {
    BridgePath& path = ens.paths[i];
    path.grid = table.grid();
    path.epsilon = epsilon;
    path.noise = sample_brownian(table.grid(), table.dim_control(), seed, i);
    const auto& dw = path.noise->increments;
    path.states.reserve(n + 1);
    path.controls.reserve(n);

    std::unique_ptr<Controller> controller = factory(i, x0[i]);
    const bool wants_noise = controller->uses_noise_feature();
    KernelConvolution drive(table);
    KernelConvolution noise(table);
    VolterraState memory = VolterraState::zero(d);
    Vector feature = Vector::Zero(d);
    int j = 0;
    try {
      for (j = 0; j < n; ++j) {
        path.states.push_back(table.transition(j) * x0[i] + drive.value(j));
        if (wants_noise) feature = root_eps * noise.value(j);
        const StepContext ctx{j, table.grid().node(j), &x0[i], &path.states.back(), &feature, &memory};
        Vector u = controller->control(ctx);
        if (u.size() != table.dim_control() || !u.allFinite()) {
          throw InvalidArgument("controller returned a non-finite or mis-sized control");
        }
        drive.push(u * dt + root_eps * dw[j]);
        if (wants_noise) noise.push(dw[j]);
        memory.advance(table, j, dw[j]);
        path.controls.push_back(std::move(u));
      }
    } catch (const Error& e) {
      rethrow_with_context(e, fmt::format("path {}, index {}", i, j));
    }
    path.states.push_back(table.transition(n) * x0[i] + drive.value(n));
    path.states.front() = x0[i];
  });
  return ens;
}

RolloutEnsemble rollout_deterministic(const KernelTable& table, const ControllerFactory& factory,
                                      const std::vector<Vector>& x0, ControllerTag tag, int threads) {
  check_inputs(table, x0);
  const int n = table.n_steps();
  const int d = table.dim_state();
  const double dt = table.grid().dt();

  RolloutEnsemble ens;
  ens.tag = tag;
  ens.paths.resize(x0.size());
  parallel_for(x0.size(), threads, [&](std::size_t i) {
    BridgePath& path = ens.paths[i];
    path.grid = table.grid();
    path.states.reserve(n + 1);
    path.controls.reserve(n + 1);
    std::unique_ptr<Controller> controller = factory(i, x0[i]);
    const Vector zero_feature = Vector::Zero(d);
    const VolterraState memory = VolterraState::zero(d);
    // drive holds dt·w_k·u_k for k < j; the k = j term (weight 1/2) is added per node.
    KernelConvolution drive(table);
    int j = 0;
    try {
      for (j = 0; j <= n; ++j) {
        const Vector partial = table.transition(j) * x0[i] + drive.value(j);
        const StepContext ctx{j, table.grid().node(j), &x0[i], &partial, &zero_feature, &memory};
        Vector u = controller->control(ctx);
        if (u.size() != table.dim_control() || !u.allFinite()) {
          throw InvalidArgument("controller returned a non-finite or mis-sized control");
        }
        path.states.push_back(j == 0 ? x0[i] : Vector(partial + 0.5 * dt * table.phi_lag(0) * u));
        if (j < n) drive.push((j == 0 ? 0.5 : 1.0) * dt * u);
        path.controls.push_back(std::move(u));
      }
    } catch (const Error& e) {
      rethrow_with_context(e, fmt::format("path {}, index {}", i, j));
    }
  });
  return ens;
}

}  // namespace avgflow
