#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "avgflow/distributions.hpp"
#include "avgflow/kernel.hpp"
#include "avgflow/learn.hpp"

namespace avgflow::cli {

using json = nlohmann::json;

/// Thresholds checked by every command; a failing gate turns into exit code 5
/// under --strict.
struct Gates {
  double pinning_tol = 1e-6;
  double landing_tol = 1e-3;
  double gain_tol = 1e-3;
  double max_mean_se = 3.0;
  double max_cov_rel_diff = 0.1;
  std::optional<double> max_energy_distance;
};

struct BridgeSettings {
  std::vector<double> epsilons;
  Vector x0;
  Vector xf;
  int paths = 0;
};

enum class ControllerKind { kTeacher, kPosteriorExact, kLearnedFfn, kLearnedRnn, kGainModel };

const char* to_string(ControllerKind kind);
bool is_stochastic(ControllerKind kind);

struct RunConfig {
  FamilySpec family;
  int n_theta = 64;
  double t_final = 1.0;
  int n_steps = 1000;
  double epsilon = 0.5;
  BridgeSettings bridge;
  GaussianMixture source;
  GaussianMixture target;
  CouplingKind coupling = CouplingKind::kOptimalTransport;
  ControllerKind controller = ControllerKind::kTeacher;
  PosteriorWeighting weighting = PosteriorWeighting::kNormalized;
  int samples = 0;
  int paths = 0;
  int write_paths = 0;
  TrainConfig ffn;
  TrainConfig rnn;
  TrainConfig gain;
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path output_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path ensemble_a;
  std::filesystem::path ensemble_b;
  Gates gates;

  TimeGrid grid() const { return TimeGrid(t_final, n_steps); }
};

/// Every key with its default value.
json default_config();
/// Overrides applied by --preset paper|desk. Throws ConfigError.
json preset_config(std::string_view name);
/// Recursive merge of `overlay` into `base`; mixture, family and list values
/// are replaced as a whole.
json merge_config(json base, const json& overlay);
json load_config_file(const std::filesystem::path& path);
/// Validates the merged document (unknown keys, types, ranges, referenced
/// files) and converts it. Throws ConfigError.
RunConfig parse_config(const json& resolved);
/// Stable 64-bit digest of the command and the output-relevant configuration.
std::uint64_t config_hash(const json& resolved, std::string_view command);

}  // namespace avgflow::cli
