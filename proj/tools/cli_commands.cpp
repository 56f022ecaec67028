#include "cli_commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "avgflow/bridge.hpp"
#include "avgflow/coupling.hpp"
#include "avgflow/errors.hpp"
#include "avgflow/io.hpp"
#include "avgflow/metrics.hpp"
#include "avgflow/sim.hpp"

namespace avgflow::cli {

namespace fs = std::filesystem;

fs::path RunContext::output(const std::string& name) {
  const fs::path p = dir / name;
  fs::create_directories(p.parent_path());
  files.emplace_back(name);
  return p;
}

void RunContext::gate(const std::string& name, double value, double limit) {
  gates.push_back({name, value, limit, value <= limit});
}

bool RunContext::gates_pass() const {
  return std::all_of(gates.begin(), gates.end(), [](const GateResult& g) { return g.pass; });
}

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

void write_json(RunContext& ctx, const std::string& name, const json& doc) {
  write_text(ctx.output(name), doc.dump(2) + "\n");
}

KernelTable make_table(const RunConfig& c) {
  return build_kernel_table(build_theta_ensemble(c.family, c.n_theta), c.grid());
}

void check_dims(const RunConfig& c, const KernelTable& table) {
  if (c.source.dim() != table.dim_state()) {
    throw ConfigError(fmt::format("source/target dimension {} does not match the family state dimension {}",
                                  c.source.dim(), table.dim_state()));
  }
}

std::vector<BridgePath> head(const RolloutEnsemble& e, int count) {
  const auto n = std::min<std::size_t>(e.paths.size(), static_cast<std::size_t>(count));
  return {e.paths.begin(), e.paths.begin() + static_cast<std::ptrdiff_t>(n)};
}

void write_terminal(const fs::path& file, const std::vector<Vector>& states) {
  std::ostringstream out;
  out << "path_id";
  for (Eigen::Index k = 0; k < states.at(0).size(); ++k) out << ",x" << k + 1;
  out << "\n";
  for (std::size_t i = 0; i < states.size(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < states[i].size(); ++k) out << "," << format_double(states[i](k));
    out << "\n";
  }
  write_text(file, out.str());
}

void write_ensemble(RunContext& ctx, const KernelTable& table, const RolloutEnsemble& e) {
  write_trajectories(ctx.output("trajectories.csv"), head(e, ctx.config.write_paths), table.dim_control());
  write_terminal(ctx.output("terminal.csv"), e.terminal_states());
}

void write_report(RunContext& ctx, const MetricsReport& r) {
  write_metrics(ctx.output("metrics.txt"), ctx.output("checkpoints.csv"), r);
  ctx.summary["metrics"] = {{"terminal_mean", vector_json(r.terminal_mean)},
                            {"terminal_cov", matrix_json(r.terminal_cov)},
                            {"reference_mean", vector_json(r.reference_mean)},
                            {"reference_cov", matrix_json(r.reference_cov)},
                            {"energy_distance", r.energy_distance},
                            {"sliced_w2", r.sliced_w2},
                            {"max_mean_se", r.max_mean_se()},
                            {"terminal_cov_rel_diff", r.terminal_cov_rel_diff()}};
}

void law_gates(RunContext& ctx, const MetricsReport& r) {
  const Gates& g = ctx.config.gates;
  ctx.gate("max_mean_se", r.max_mean_se(), g.max_mean_se);
  ctx.gate("terminal_cov_rel_diff", r.terminal_cov_rel_diff(), g.max_cov_rel_diff);
  if (g.max_energy_distance) ctx.gate("energy_distance", r.energy_distance, *g.max_energy_distance);
}

// ---- kernel ---------------------------------------------------------------

void cmd_kernel(RunContext& ctx) {
  const KernelTable table = make_table(ctx.config);
  write_kernel_bundle(ctx.dir / "kernel", table);
  std::vector<fs::path> bundle;
  for (const auto& entry : fs::directory_iterator(ctx.dir / "kernel")) bundle.push_back(entry.path().filename());
  std::sort(bundle.begin(), bundle.end());
  for (const auto& f : bundle) ctx.files.push_back(fs::path("kernel") / f);

  const Matrix& g = table.gramian_forward(table.n_steps());
  ctx.summary["terminal_gramian"] = matrix_json(g);
  ctx.summary["terminal_condition_number"] = table.terminal_condition_number();
  ctx.summary["terminal_smallest_eigenvalue"] = table.terminal_smallest_eigenvalue();
  ctx.summary["averaged_controllable"] = true;
  fmt::print("G(t_f,0) diagonal:");
  for (Eigen::Index k = 0; k < g.rows(); ++k) fmt::print(" {:.7f}", g(k, k));
  fmt::print("\ncondition number {:.6g}, averaged controllable\n", table.terminal_condition_number());
}

// ---- bridge ---------------------------------------------------------------

void cmd_bridge(RunContext& ctx) {
  const RunConfig& c = ctx.config;
  const KernelTable table = make_table(c);
  const EndpointPair z{c.bridge.x0, c.bridge.xf};
  const BridgePath det = deterministic_trajectory(table, z);
  write_trajectories(ctx.output("bridge_eps_0.csv"), {det}, table.dim_control());
  const double pin = (det.states.back() - z.xf).cwiseAbs().maxCoeff();
  json runs = json::array({{{"epsilon", 0.0}, {"file", "bridge_eps_0.csv"}, {"terminal_error", pin}}});
  ctx.gate("deterministic_terminal_error", pin, c.gates.pinning_tol);

  for (double eps : c.bridge.epsilons) {
    if (eps == 0.0) continue;
    std::vector<BridgePath> paths;
    double worst = 0.0;
    for (int i = 0; i < c.bridge.paths; ++i) {
      const BrownianPath noise = sample_brownian(table.grid(), table.dim_control(), c.seed, static_cast<std::uint64_t>(i));
      paths.push_back(volterra_trajectory(table, z, noise, eps));
      worst = std::max(worst, (paths.back().states.back() - z.xf).cwiseAbs().maxCoeff());
    }
    const std::string name = fmt::format("bridge_eps_{}.csv", eps);
    write_trajectories(ctx.output(name), paths, table.dim_control());
    runs.push_back({{"epsilon", eps}, {"file", name}, {"paths", c.bridge.paths}, {"terminal_error", worst}});
  }
  ctx.summary["bridges"] = runs;
  fmt::print("deterministic terminal error {:.3e}\n", pin);
}

// ---- training -------------------------------------------------------------

struct Pairing {
  SamplePairSet pairs;
  CouplingPlan plan;
  TeacherSet teacher;
};

Pairing make_pairing(RunContext& ctx, const KernelTable& table) {
  const RunConfig& c = ctx.config;
  Pairing p;
  p.pairs = product_pairs(c.source, c.target, static_cast<std::size_t>(c.samples), c.seed);
  if (c.coupling == CouplingKind::kOptimalTransport) {
    p.plan = ot_assignment(p.pairs.sources, p.pairs.targets);
  } else {
    for (std::size_t i = 0; i < p.pairs.size(); ++i) p.plan.permutation.push_back(i);
    p.plan.total_cost = assignment_cost(p.pairs.sources, p.pairs.targets, p.plan.permutation);
    for (std::size_t i = 0; i < p.pairs.size(); ++i) {
      p.plan.costs.push_back((p.pairs.sources[i] - p.pairs.targets[i]).squaredNorm());
    }
  }
  p.teacher = teacher_controls(table, p.plan, p.pairs.sources, p.pairs.targets);
  write_plan(ctx.output("plan.csv"), p.plan);
  write_teacher(ctx.output("teacher.csv"), p.teacher, c.ffn.time_stride);
  ctx.summary["coupling"] = {{"kind", c.coupling == CouplingKind::kOptimalTransport ? "ot" : "product"},
                             {"pairs", p.pairs.size()},
                             {"total_cost", p.plan.total_cost}};
  return p;
}

struct Models {
  std::optional<FeedforwardModel> ffn;
  std::optional<RecurrentModel> rnn;
  std::optional<GainModel> gain;
};

void record_training(RunContext& ctx, const TrainReport& report) {
  write_train_report(ctx.output("train_report.csv"), report);
  ctx.summary["training"] = {{"epochs", report.epochs},
                             {"best_epoch", report.best_epoch},
                             {"initial_loss", report.initial_loss()},
                             {"final_loss", report.final_loss()}};
  ctx.gate("train_loss_ratio", report.final_loss() / report.initial_loss(), 1.0);
  fmt::print("training loss {:.6g} -> {:.6g}\n", report.initial_loss(), report.final_loss());
}

Models train_models(RunContext& ctx, const KernelTable& table, std::optional<Pairing>& pairing) {
  const RunConfig& c = ctx.config;
  Models m;
  switch (c.controller) {
    case ControllerKind::kLearnedFfn: {
      if (!pairing) pairing = make_pairing(ctx, table);
      FeedforwardFit fit = train_feedforward(teacher_dataset(pairing->teacher, c.ffn.time_stride), c.ffn);
      save_checkpoint(ctx.output("model.json"), fit.model);
      record_training(ctx, fit.report);
      m.ffn = std::move(fit.model);
      break;
    }
    case ControllerKind::kLearnedRnn: {
      const SamplePairSet pairs = product_pairs(c.source, c.target, static_cast<std::size_t>(c.samples), c.seed);
      RecurrentFit fit = train_recurrent(bridge_sequences(table, pairs, c.epsilon, c.seed), c.rnn);
      save_checkpoint(ctx.output("model.json"), fit.model);
      record_training(ctx, fit.report);
      m.rnn = std::move(fit.model);
      break;
    }
    case ControllerKind::kGainModel: {
      GainFit fit = train_gain(table, c.gain);
      save_checkpoint(ctx.output("model.json"), fit.model);
      record_training(ctx, fit.report);
      const double err = gain_sup_error(fit.model, table);
      ctx.summary["gain_sup_error"] = err;
      ctx.gate("gain_sup_error", err, c.gates.gain_tol);
      m.gain = std::move(fit.model);
      break;
    }
    case ControllerKind::kTeacher:
    case ControllerKind::kPosteriorExact:
      break;
  }
  return m;
}

Models load_models(const RunConfig& c) {
  Models m;
  const bool learned = c.controller == ControllerKind::kLearnedFfn || c.controller == ControllerKind::kLearnedRnn ||
                       c.controller == ControllerKind::kGainModel;
  if (!learned) return m;
  if (c.checkpoint.empty()) throw ConfigError(fmt::format("controller {} needs a checkpoint", to_string(c.controller)));
  if (c.controller == ControllerKind::kLearnedFfn) m.ffn = load_feedforward(c.checkpoint);
  if (c.controller == ControllerKind::kLearnedRnn) m.rnn = load_recurrent(c.checkpoint);
  if (c.controller == ControllerKind::kGainModel) m.gain = load_gain(c.checkpoint);
  return m;
}

// ---- rollouts -------------------------------------------------------------

void landing(RunContext& ctx, const KernelTable& table, const RolloutEnsemble& e, const std::vector<Vector>& targets) {
  double worst = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    worst = std::max(worst, (e.paths[i].states.back() - targets[i]).cwiseAbs().maxCoeff());
  }
  write_ensemble(ctx, table, e);
  ctx.summary["paired_terminal_error"] = worst;
  ctx.gate("paired_terminal_error", worst, ctx.config.gates.landing_tol);
  fmt::print("max terminal error to paired targets {:.3e}\n", worst);
}

void simulate(RunContext& ctx, const KernelTable& table, const Models& models, std::optional<Pairing>& pairing) {
  const RunConfig& c = ctx.config;
  const int threads = c.threads;
  const auto paths = static_cast<std::size_t>(c.paths);
  const std::vector<Vector> x0 = sample(c.source, paths, c.seed, 1);
  const std::vector<Vector> reference = sample(c.target, paths, c.seed, 2);
  const std::uint64_t noise_seed = c.seed + 1;

  switch (c.controller) {
    case ControllerKind::kTeacher: {
      if (!pairing) pairing = make_pairing(ctx, table);
      const RolloutEnsemble e =
          rollout_deterministic(table, deterministic_exact_factory(table, pairing->teacher.paired_targets),
                                pairing->teacher.sources, ControllerTag::kDeterministicExact, threads);
      landing(ctx, table, e, pairing->teacher.paired_targets);
      write_report(ctx, compare_laws(e, reference));
      break;
    }
    case ControllerKind::kGainModel: {
      if (!pairing) pairing = make_pairing(ctx, table);
      const RolloutEnsemble e =
          rollout_deterministic(table, gain_factory(*models.gain, table, pairing->teacher.paired_targets),
                                pairing->teacher.sources, ControllerTag::kGainModel, threads);
      landing(ctx, table, e, pairing->teacher.paired_targets);
      write_report(ctx, compare_laws(e, reference));
      break;
    }
    case ControllerKind::kLearnedFfn: {
      const RolloutEnsemble e =
          rollout_deterministic(table, feedforward_factory(*models.ffn), x0, ControllerTag::kLearnedFfn, threads);
      write_ensemble(ctx, table, e);
      const MetricsReport r = compare_laws(e, reference);
      write_report(ctx, r);
      // Distance to the rollout that steers every source to the target mean.
      const RolloutEnsemble mean_run = rollout_deterministic(
          table, deterministic_exact_factory(table, std::vector<Vector>(paths, c.target.mean())), x0,
          ControllerTag::kDeterministicExact, threads);
      double gap = 0.0;
      for (std::size_t i = 0; i < paths; ++i) {
        const Vector& ref = mean_run.paths[i].states.back();
        gap = std::max(gap, (e.paths[i].states.back() - ref).norm() / std::max(ref.norm(), 1e-12));
      }
      ctx.summary["mean_target_max_rel_gap"] = gap;
      if (c.gates.max_energy_distance) ctx.gate("energy_distance", r.energy_distance, *c.gates.max_energy_distance);
      fmt::print("energy distance to target {:.4e}, max relative gap to mean-target rollout {:.4e}\n",
                 r.energy_distance, gap);
      break;
    }
    case ControllerKind::kPosteriorExact:
    case ControllerKind::kLearnedRnn: {
      RolloutEnsemble e;
      if (c.controller == ControllerKind::kPosteriorExact) {
        const MixturePosterior post(table, c.source, c.target, c.epsilon, c.weighting);
        e = rollout_stochastic(table, posterior_exact_factory(post), x0, c.epsilon, noise_seed,
                               ControllerTag::kPosteriorExact, threads);
      } else {
        e = rollout_stochastic(table, recurrent_factory(*models.rnn), x0, c.epsilon, noise_seed,
                               ControllerTag::kLearnedRnn, threads);
      }
      write_ensemble(ctx, table, e);
      const MetricsReport r = compare_laws(e, reference);
      write_report(ctx, r);
      law_gates(ctx, r);
      fmt::print("energy distance to target {:.4e}, terminal covariance relative gap {:.4e}\n", r.energy_distance,
                 r.terminal_cov_rel_diff());
      break;
    }
  }
  ctx.summary["controller"] = to_string(c.controller);
  ctx.summary["paths"] = c.paths;
}

void cmd_train(RunContext& ctx) {
  const KernelTable table = make_table(ctx.config);
  check_dims(ctx.config, table);
  if (ctx.config.controller == ControllerKind::kTeacher || ctx.config.controller == ControllerKind::kPosteriorExact) {
    throw ConfigError(fmt::format("controller {} has no trainable model", to_string(ctx.config.controller)));
  }
  std::optional<Pairing> pairing;
  train_models(ctx, table, pairing);
  ctx.summary["controller"] = to_string(ctx.config.controller);
}

void cmd_flow(RunContext& ctx) {
  const KernelTable table = make_table(ctx.config);
  check_dims(ctx.config, table);
  std::optional<Pairing> pairing;
  const Models models = train_models(ctx, table, pairing);
  simulate(ctx, table, models, pairing);
}

void cmd_simulate(RunContext& ctx) {
  const KernelTable table = make_table(ctx.config);
  check_dims(ctx.config, table);
  const Models models = load_models(ctx.config);
  std::optional<Pairing> pairing;
  simulate(ctx, table, models, pairing);
}

// ---- metrics --------------------------------------------------------------

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const fs::path& file) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: bad number '{}'", file.string(), s));
  }
}

/// Reads the states of a trajectories.csv file back into an ensemble.
RolloutEnsemble read_trajectories(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(fmt::format("cannot read {}", file.string()));
  std::string line;
  std::getline(in, line);
  const std::vector<std::string> header = split(line);
  if (header.size() < 3 || header[0] != "path_id" || header[1] != "t") {
    throw ConfigError(fmt::format("{}: not a trajectory file", file.string()));
  }
  const auto d = static_cast<Eigen::Index>(
      std::count_if(header.begin(), header.end(), [](const std::string& h) { return !h.empty() && h[0] == 'x'; }));
  std::map<long long, BridgePath> paths;
  std::map<long long, double> t_last;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (static_cast<Eigen::Index>(cells.size()) < 2 + d) throw ConfigError(fmt::format("{}: short row", file.string()));
    const auto id = static_cast<long long>(parse_number(cells[0], file));
    Vector x(d);
    for (Eigen::Index k = 0; k < d; ++k) x(k) = parse_number(cells[2 + k], file);
    paths[id].states.push_back(std::move(x));
    t_last[id] = parse_number(cells[1], file);
  }
  if (paths.empty()) throw ConfigError(fmt::format("{}: no trajectories", file.string()));
  RolloutEnsemble e;
  for (auto& [id, p] : paths) {
    if (p.states.size() < 2) throw ConfigError(fmt::format("{}: path {} has a single node", file.string(), id));
    p.grid = TimeGrid(t_last[id], static_cast<int>(p.states.size()) - 1);
    if (!e.paths.empty() && !(p.grid == e.paths[0].grid)) {
      throw ConfigError(fmt::format("{}: paths on different grids", file.string()));
    }
    e.paths.push_back(std::move(p));
  }
  return e;
}

void cmd_metrics(RunContext& ctx) {
  const RunConfig& c = ctx.config;
  if (c.ensemble_a.empty()) throw ConfigError("metrics.a must name a trajectories.csv file");
  const RolloutEnsemble a = read_trajectories(c.ensemble_a);
  MetricsReport r;
  if (c.ensemble_b.empty()) {
    r = compare_laws(a, sample(c.target, static_cast<std::size_t>(c.paths), c.seed, 2));
  } else {
    const RolloutEnsemble b = read_trajectories(c.ensemble_b);
    if (!(a.paths[0].grid == b.paths[0].grid)) throw ConfigError("metrics: ensembles are on different grids");
    r = compare_laws(a, b);
  }
  write_report(ctx, r);
  law_gates(ctx, r);
  fmt::print("energy distance {:.6e}, max mean gap {:.3f} SE, terminal covariance relative gap {:.4e}\n",
             r.energy_distance, r.max_mean_se(), r.terminal_cov_rel_diff());
}

}  // namespace

void run_command(RunContext& ctx) {
  if (ctx.command == "kernel") {
    cmd_kernel(ctx);
  } else if (ctx.command == "bridge") {
    cmd_bridge(ctx);
  } else if (ctx.command == "flow") {
    cmd_flow(ctx);
  } else if (ctx.command == "train") {
    cmd_train(ctx);
  } else if (ctx.command == "simulate") {
    cmd_simulate(ctx);
  } else if (ctx.command == "metrics") {
    cmd_metrics(ctx);
  } else {
    throw ConfigError(fmt::format("unknown command '{}'", ctx.command));
  }
  write_json(ctx, "summary.json", ctx.summary);
  json gates = json::array();
  for (const auto& g : ctx.gates) {
    gates.push_back({{"name", g.name}, {"value", g.value}, {"limit", g.limit}, {"pass", g.pass}});
  }
  write_json(ctx, "gates.json", gates);
}

}  // namespace avgflow::cli
