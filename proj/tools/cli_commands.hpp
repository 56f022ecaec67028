#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cli_config.hpp"

namespace avgflow::cli {

struct GateResult {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = true;
};

/// Everything one subcommand run needs and produces.
struct RunContext {
  std::string command;
  RunConfig config;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> files;  // relative to dir, in write order
  json summary = json::object();
  std::vector<GateResult> gates;

  std::filesystem::path output(const std::string& name);
  /// Records value <= limit.
  void gate(const std::string& name, double value, double limit);
  bool gates_pass() const;
};

/// Dispatches on ctx.command and writes summary.json and gates.json. Library
/// errors propagate.
void run_command(RunContext& ctx);

}  // namespace avgflow::cli
