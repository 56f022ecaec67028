#include "cli_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "avgflow/errors.hpp"
#include "avgflow/rng.hpp"

namespace avgflow::cli {

namespace {

json components(const std::vector<json>& list) {
  json out = json::object();
  out["components"] = list;
  return out;
}

json component(double weight, std::vector<double> mean, double var) {
  return {{"weight", weight}, {"mean", mean}, {"cov", {var, 0.0, 0.0, var}}};
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

const json& need(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(fmt::format("missing '{}' in {}", key, where));
  return obj.at(key);
}

double get_double(const json& obj, const std::string& key, const std::string& where) {
  const json& v = need(obj, key, where);
  if (!v.is_number()) throw ConfigError(fmt::format("{}.{} must be a number", where, key));
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(fmt::format("{}.{} must be finite", where, key));
  return d;
}

long long get_int(const json& obj, const std::string& key, const std::string& where) {
  const json& v = need(obj, key, where);
  if (!v.is_number_integer()) throw ConfigError(fmt::format("{}.{} must be an integer", where, key));
  return v.get<long long>();
}

int get_positive(const json& obj, const std::string& key, const std::string& where) {
  const long long v = get_int(obj, key, where);
  if (v < 1 || v > (1LL << 30)) throw ConfigError(fmt::format("{}.{} must be a positive integer", where, key));
  return static_cast<int>(v);
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = need(obj, key, where);
  if (!v.is_string()) throw ConfigError(fmt::format("{}.{} must be a string", where, key));
  return v.get<std::string>();
}

Vector to_vector(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(fmt::format("{} must be a non-empty array of numbers", where));
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(fmt::format("{} must be a non-empty array of numbers", where));
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  if (!out.allFinite()) throw ConfigError(fmt::format("{} has non-finite entries", where));
  return out;
}

// Nested rows, or a flat row-major list when `rows` is known (> 0).
Matrix to_matrix(const json& v, int rows, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(fmt::format("{} must be a non-empty array", where));
  if (v[0].is_array()) {
    const auto cols = v[0].size();
    Matrix m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < v.size(); ++r) {
      if (!v[r].is_array() || v[r].size() != cols) throw ConfigError(fmt::format("{} has ragged rows", where));
      m.row(static_cast<Eigen::Index>(r)) = to_vector(v[r], where).transpose();
    }
    return m;
  }
  const Vector flat = to_vector(v, where);
  if (rows <= 0 || flat.size() % rows != 0) {
    throw ConfigError(fmt::format("{} needs nested rows or a row-major list with {} rows", where, rows));
  }
  const Eigen::Index cols = flat.size() / rows;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = flat.segment(r * cols, cols).transpose();
  return m;
}

GaussianMixture parse_mixture(const json& spec, const std::string& where) {
  if (!spec.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  if (spec.contains("ring")) {
    check_keys(spec, {"ring"}, where);
    const json& r = spec.at("ring");
    const std::string w = where + ".ring";
    check_keys(r, {"count", "radius", "sigma2", "center"}, w);
    const Vector center = r.contains("center") ? to_vector(r.at("center"), w + ".center") : Vector::Zero(2);
    return ring_mixture(get_positive(r, "count", w), get_double(r, "radius", w), get_double(r, "sigma2", w), center);
  }
  check_keys(spec, {"components"}, where);
  const json& list = need(spec, "components", where);
  if (!list.is_array()) throw ConfigError(fmt::format("{}.components must be an array", where));
  std::vector<GaussianComponent> comps;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string w = fmt::format("{}.components[{}]", where, i);
    check_keys(list[i], {"weight", "mean", "cov"}, w);
    GaussianComponent c;
    c.weight = list[i].contains("weight") ? get_double(list[i], "weight", w) : 1.0;
    c.mean = to_vector(need(list[i], "mean", w), w + ".mean");
    c.cov = to_matrix(need(list[i], "cov", w), static_cast<int>(c.mean.size()), w + ".cov");
    comps.push_back(std::move(c));
  }
  return GaussianMixture(std::move(comps));
}

FamilySpec parse_family(const json& spec) {
  check_keys(spec, {"id", "A", "B", "table"}, "family");
  FamilySpec f;
  f.id = get_string(spec, "id", "family");
  if (f.id == "constant") {
    f.a = to_matrix(need(spec, "A", "family"), 0, "family.A");
    f.b = to_matrix(need(spec, "B", "family"), static_cast<int>(f.a.rows()), "family.B");
  } else if (f.id == "user-table") {
    f.table = get_string(spec, "table", "family");
    if (!std::filesystem::exists(f.table)) throw ConfigError(fmt::format("family.table not found: {}", f.table.string()));
  } else if (f.id != "ou2d" && f.id != "antidamped2d") {
    throw ConfigError(fmt::format("unknown family '{}'", f.id));
  }
  return f;
}

TrainConfig parse_training(const json& spec, TrainConfig base, const std::string& where) {
  check_keys(spec, {"epochs", "batch_size", "learning_rate", "late_learning_rate", "switch_fraction", "schedule",
                    "validation_fraction", "hidden", "time_stride", "keep_best"},
             where);
  if (spec.contains("keep_best")) {
    if (!spec.at("keep_best").is_boolean()) throw ConfigError(where + ".keep_best must be a boolean");
    base.keep_best = spec.at("keep_best").get<bool>();
  }
  if (spec.contains("epochs")) {
    const long long e = get_int(spec, "epochs", where);
    if (e < 0 || e > (1LL << 30)) throw ConfigError(where + ".epochs must be >= 0");
    base.epochs = static_cast<int>(e);
  }
  if (spec.contains("batch_size")) base.batch_size = get_positive(spec, "batch_size", where);
  if (spec.contains("learning_rate")) base.learning_rate = get_double(spec, "learning_rate", where);
  if (spec.contains("late_learning_rate")) base.late_learning_rate = get_double(spec, "late_learning_rate", where);
  if (spec.contains("switch_fraction")) base.switch_fraction = get_double(spec, "switch_fraction", where);
  if (spec.contains("validation_fraction")) base.validation_fraction = get_double(spec, "validation_fraction", where);
  if (spec.contains("hidden")) base.hidden = get_positive(spec, "hidden", where);
  if (spec.contains("time_stride")) base.time_stride = get_positive(spec, "time_stride", where);
  if (spec.contains("schedule")) {
    const std::string s = get_string(spec, "schedule", where);
    if (s == "piecewise") {
      base.schedule = LearningSchedule::kPiecewise;
    } else if (s == "exponential") {
      base.schedule = LearningSchedule::kExponential;
    } else {
      throw ConfigError(fmt::format("{}.schedule must be piecewise or exponential", where));
    }
  }
  try {
    base.validate();
  } catch (const Error& e) {
    throw ConfigError(fmt::format("{}: {}", where, e.what()));
  }
  return base;
}

ControllerKind parse_controller(const std::string& s) {
  if (s == "teacher") return ControllerKind::kTeacher;
  if (s == "posterior-exact") return ControllerKind::kPosteriorExact;
  if (s == "learned-ffn") return ControllerKind::kLearnedFfn;
  if (s == "learned-rnn") return ControllerKind::kLearnedRnn;
  if (s == "gain-model") return ControllerKind::kGainModel;
  throw ConfigError(fmt::format("unknown controller '{}'", s));
}

}  // namespace

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kTeacher: return "teacher";
    case ControllerKind::kPosteriorExact: return "posterior-exact";
    case ControllerKind::kLearnedFfn: return "learned-ffn";
    case ControllerKind::kLearnedRnn: return "learned-rnn";
    case ControllerKind::kGainModel: return "gain-model";
  }
  return "unknown";
}

bool is_stochastic(ControllerKind kind) {
  return kind == ControllerKind::kPosteriorExact || kind == ControllerKind::kLearnedRnn;
}

json default_config() {
  return {
      {"family", {{"id", "ou2d"}}},
      {"n_theta", 64},
      {"t_f", 1.0},
      {"n_steps", 1000},
      {"epsilon", 0.5},
      {"bridge", {{"epsilons", {0.0, 0.5, 1.0}}, {"x0", {1.0, 0.0}}, {"xf", {1.0, 1.0}}, {"paths", 20}}},
      {"source", components({component(1.0, {1.0, 0.0}, 0.01)})},
      {"target", components({component(0.5, {0.0, 1.0}, 0.02), component(0.5, {2.0, 1.0}, 0.02)})},
      {"coupling", "ot"},
      {"controller", "teacher"},
      {"posterior_weighting", "normalized"},
      {"samples", 1000},
      {"paths", 1000},
      {"write_paths", 200},
      {"training", {{"ffn", json::object()}, {"rnn", json::object()}, {"gain", json::object()}}},
      {"seed", 0},
      {"threads", 1},
      {"output_dir", "runs"},
      {"checkpoint", ""},
      {"metrics", {{"a", ""}, {"b", ""}}},
      {"gates",
       {{"pinning_tol", 1e-6},
        {"landing_tol", 1e-3},
        {"gain_tol", 1e-3},
        {"max_mean_se", 3.0},
        {"max_cov_rel_diff", 0.1},
        {"max_energy_distance", nullptr}}},
  };
}

json preset_config(std::string_view name) {
  if (name == "desk") return {{"n_steps", 200}, {"samples", 256}, {"paths", 256}};
  if (name == "paper") {
    return {{"n_steps", 1000},
            {"samples", 1000},
            {"paths", 1000},
            {"write_paths", 500},
            {"training", {{"rnn", {{"epochs", 100}}}, {"ffn", {{"hidden", 64}}}}}};
  }
  throw ConfigError(fmt::format("unknown preset '{}' (expected paper or desk)", name));
}

json merge_config(json base, const json& overlay) {
  if (!overlay.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& [key, value] : overlay.items()) {
    const bool whole = key == "family" || key == "source" || key == "target";
    if (!whole && value.is_object() && base.contains(key) && base[key].is_object()) {
      base[key] = merge_config(base[key], value);
    } else {
      base[key] = value;
    }
  }
  return base;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
  std::stringstream text;
  text << in.rdbuf();
  try {
    return json::parse(text.str());
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config {}: {}", path.string(), e.what()));
  }
}

RunConfig parse_config(const json& r) {
  check_keys(r,
             {"family", "n_theta", "t_f", "n_steps", "epsilon", "bridge", "source", "target", "coupling", "controller",
              "posterior_weighting", "samples", "paths", "write_paths", "training", "seed", "threads", "output_dir",
              "checkpoint", "metrics", "gates"},
             "config");
  RunConfig c;
  c.family = parse_family(need(r, "family", "config"));
  c.n_theta = get_positive(r, "n_theta", "config");
  c.t_final = get_double(r, "t_f", "config");
  if (c.t_final <= 0.0) throw ConfigError("t_f must be > 0");
  c.n_steps = get_positive(r, "n_steps", "config");
  c.epsilon = get_double(r, "epsilon", "config");
  if (c.epsilon < 0.0) throw ConfigError("epsilon must be >= 0");

  const json& b = need(r, "bridge", "config");
  check_keys(b, {"epsilons", "x0", "xf", "paths"}, "bridge");
  const json& eps_list = need(b, "epsilons", "bridge");
  if (!eps_list.is_array()) throw ConfigError("bridge.epsilons must be an array");
  for (const auto& e : eps_list) {
    if (!e.is_number() || e.get<double>() < 0.0) throw ConfigError("bridge.epsilons must be numbers >= 0");
    c.bridge.epsilons.push_back(e.get<double>());
  }
  c.bridge.x0 = to_vector(need(b, "x0", "bridge"), "bridge.x0");
  c.bridge.xf = to_vector(need(b, "xf", "bridge"), "bridge.xf");
  c.bridge.paths = get_positive(b, "paths", "bridge");

  c.source = parse_mixture(need(r, "source", "config"), "source");
  c.target = parse_mixture(need(r, "target", "config"), "target");
  if (c.source.dim() != c.target.dim()) throw ConfigError("source and target dimensions differ");

  const std::string coupling = get_string(r, "coupling", "config");
  if (coupling == "ot") {
    c.coupling = CouplingKind::kOptimalTransport;
  } else if (coupling == "product") {
    c.coupling = CouplingKind::kProduct;
  } else {
    throw ConfigError("coupling must be ot or product");
  }
  c.controller = parse_controller(get_string(r, "controller", "config"));
  const std::string weighting = get_string(r, "posterior_weighting", "config");
  if (weighting == "normalized") {
    c.weighting = PosteriorWeighting::kNormalized;
  } else if (weighting == "literal") {
    c.weighting = PosteriorWeighting::kLiteral;
  } else {
    throw ConfigError("posterior_weighting must be normalized or literal");
  }
  c.samples = get_positive(r, "samples", "config");
  c.paths = get_positive(r, "paths", "config");
  const long long wp = get_int(r, "write_paths", "config");
  if (wp < 0) throw ConfigError("write_paths must be >= 0");
  c.write_paths = static_cast<int>(std::min<long long>(wp, c.paths));

  const json& t = need(r, "training", "config");
  check_keys(t, {"ffn", "rnn", "gain"}, "training");
  c.ffn = parse_training(t.value("ffn", json::object()), feedforward_defaults(), "training.ffn");
  c.rnn = parse_training(t.value("rnn", json::object()), recurrent_defaults(), "training.rnn");
  c.gain = parse_training(t.value("gain", json::object()), gain_defaults(), "training.gain");

  const json& seed = need(r, "seed", "config");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
    throw ConfigError("seed must be a non-negative integer");
  }
  c.seed = seed.get<std::uint64_t>();
  for (TrainConfig* tc : {&c.ffn, &c.rnn, &c.gain}) tc->seed = c.seed;
  c.threads = get_positive(r, "threads", "config");
  c.output_dir = get_string(r, "output_dir", "config");
  c.checkpoint = get_string(r, "checkpoint", "config");
  if (!c.checkpoint.empty() && !std::filesystem::exists(c.checkpoint)) {
    throw ConfigError(fmt::format("checkpoint not found: {}", c.checkpoint.string()));
  }
  const json& m = need(r, "metrics", "config");
  check_keys(m, {"a", "b"}, "metrics");
  c.ensemble_a = get_string(m, "a", "metrics");
  c.ensemble_b = get_string(m, "b", "metrics");
  for (const auto& p : {c.ensemble_a, c.ensemble_b}) {
    if (!p.empty() && !std::filesystem::exists(p)) throw ConfigError(fmt::format("metrics input not found: {}", p.string()));
  }

  const json& g = need(r, "gates", "config");
  check_keys(g, {"pinning_tol", "landing_tol", "gain_tol", "max_mean_se", "max_cov_rel_diff", "max_energy_distance"},
             "gates");
  c.gates.pinning_tol = get_double(g, "pinning_tol", "gates");
  c.gates.landing_tol = get_double(g, "landing_tol", "gates");
  c.gates.gain_tol = get_double(g, "gain_tol", "gates");
  c.gates.max_mean_se = get_double(g, "max_mean_se", "gates");
  c.gates.max_cov_rel_diff = get_double(g, "max_cov_rel_diff", "gates");
  if (g.contains("max_energy_distance") && !g.at("max_energy_distance").is_null()) {
    c.gates.max_energy_distance = get_double(g, "max_energy_distance", "gates");
  }
  return c;
}

std::uint64_t config_hash(const json& resolved, std::string_view command) {
  json keyed = resolved;
  // Worker count and output location do not change any output byte.
  keyed.erase("threads");
  keyed.erase("output_dir");
  const std::string text = fmt::format("{}\n{}", command, keyed.dump());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) h = mix64(h ^ ch);
  return h;
}

}  // namespace avgflow::cli
