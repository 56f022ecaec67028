#include <fmt/format.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>

#include "avgflow/errors.hpp"
#include "cli_commands.hpp"
#include "cli_config.hpp"

namespace fs = std::filesystem;
using avgflow::cli::json;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kControllability = 3,
  kDivergence = 4,
  kGateFailure = 5,
};

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h = (h ^ static_cast<unsigned char>(*it)) * 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int exit_code_for(const avgflow::Error& e) {
  switch (e.kind()) {
    case avgflow::ErrorKind::kConfiguration:
    case avgflow::ErrorKind::kInvalidArgument:
      return kConfig;
    case avgflow::ErrorKind::kNotAveragedControllable:
      return kControllability;
    case avgflow::ErrorKind::kTrainingDivergence:
      return kDivergence;
    default:
      return kFailure;
  }
}

json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

json error_record(const std::string& command, const avgflow::Error& e) {
  json rec = {{"command", command}, {"kind", avgflow::to_string(e.kind())}, {"message", e.what()},
              {"exit_code", exit_code_for(e)}};
  if (const auto* nc = dynamic_cast<const avgflow::NotAveragedControllable*>(&e)) {
    rec["smallest_eigenvalue"] = number(nc->smallest_eigenvalue());
    rec["condition_number"] = number(nc->condition_number());
  } else if (const auto* td = dynamic_cast<const avgflow::TrainingDivergence*>(&e)) {
    rec["batch_index"] = td->batch_index();
  } else if (const auto* ns = dynamic_cast<const avgflow::NearTerminalSingularity*>(&e)) {
    rec["index"] = ns->index();
  }
  return rec;
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool strict = false;
  std::string preset;
};

int run(const std::string& command, const Options& opt) {
  json resolved;
  avgflow::cli::RunContext ctx;
  ctx.command = command;
  try {
    resolved = avgflow::cli::default_config();
    if (!opt.preset.empty()) resolved = avgflow::cli::merge_config(resolved, avgflow::cli::preset_config(opt.preset));
    if (!opt.config_path.empty()) {
      resolved = avgflow::cli::merge_config(resolved, avgflow::cli::load_config_file(opt.config_path));
    }
    if (opt.seed) resolved["seed"] = *opt.seed;
    if (opt.threads) resolved["threads"] = *opt.threads;
    ctx.config = avgflow::cli::parse_config(resolved);
  } catch (const avgflow::Error& e) {
    const json rec = error_record(command, e);
    std::cerr << rec.dump() << '\n';
    return exit_code_for(e);
  }

  fs::path root = ctx.config.output_dir;
  if (const char* env = std::getenv("AVGFLOW_OUT"); env != nullptr && *env != '\0') root = env;
  ctx.dir = root / fmt::format("{}-{:016x}", command, avgflow::cli::config_hash(resolved, command));
  std::error_code ec;
  fs::remove_all(ctx.dir, ec);
  fs::create_directories(ctx.dir, ec);
  if (ec) {
    std::cerr << json{{"command", command}, {"kind", "io"}, {"message", ec.message()}, {"exit_code", kFailure}}.dump()
              << '\n';
    return kFailure;
  }

  int code = kOk;
  json error = nullptr;
  try {
    avgflow::cli::run_command(ctx);
    if (opt.strict && !ctx.gates_pass()) code = kGateFailure;
  } catch (const avgflow::Error& e) {
    code = exit_code_for(e);
    error = error_record(command, e);
    write_text(ctx.dir / "error.json", error.dump(2) + "\n");
    ctx.files.emplace_back("error.json");
    std::cerr << error.dump() << '\n';
  } catch (const std::exception& e) {
    code = kFailure;
    error = {{"command", command}, {"kind", "internal"}, {"message", e.what()}, {"exit_code", code}};
    write_text(ctx.dir / "error.json", error.dump(2) + "\n");
    ctx.files.emplace_back("error.json");
    std::cerr << error.dump() << '\n';
  }

  for (const auto& g : ctx.gates) {
    if (!g.pass) fmt::print(stderr, "gate {} failed: {:.6g} > {:.6g}\n", g.name, g.value, g.limit);
  }
  json files = json::array();
  for (const auto& f : ctx.files) {
    const fs::path full = ctx.dir / f;
    if (!fs::is_regular_file(full)) continue;
    files.push_back({{"path", f.generic_string()}, {"bytes", fs::file_size(full)}, {"fnv1a64", file_digest(full)}});
  }
  const json manifest = {{"command", command},
                         {"preset", opt.preset},
                         {"strict", opt.strict},
                         {"seed", ctx.config.seed},
                         {"threads", ctx.config.threads},
                         {"config", resolved},
                         {"files", files},
                         {"gates_pass", ctx.gates_pass()},
                         {"error", error},
                         {"exit_code", code}};
  write_text(ctx.dir / "manifest.json", manifest.dump(2) + "\n");
  fmt::print("run directory: {}\n", ctx.dir.string());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Averaged-ensemble flow steering between probability distributions"};
  app.require_subcommand(1, 1);
  Options opt;
  std::uint64_t seed = 0;
  int threads = 1;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Base random seed")->expected(1);
  CLI::Option* threads_opt = app.add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--config", opt.config_path, "JSON configuration file");
  app.add_flag("--strict", opt.strict, "Exit with code 5 when a metric gate fails");
  app.add_option("--preset", opt.preset, "Configuration preset")->check(CLI::IsMember({"paper", "desk"}));
  app.fallthrough();

  const std::pair<const char*, const char*> commands[] = {
      {"kernel", "Averaged kernels, Gramians and gains"},
      {"bridge", "Deterministic and Volterra bridge trajectories"},
      {"flow", "Couple, train if needed, and roll out the configured controller"},
      {"train", "Fit the configured learned controller and save a checkpoint"},
      {"simulate", "Roll out the configured controller (from a checkpoint for learned ones)"},
      {"metrics", "Compare two trajectory ensembles or one against the target"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  if (seed_opt->count() > 0) opt.seed = seed;
  if (threads_opt->count() > 0) opt.threads = threads;
  return run(app.get_subcommands().front()->get_name(), opt);
}
