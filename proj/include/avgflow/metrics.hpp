#pragma once

#include <cstdint>
#include <vector>

#include "avgflow/sim.hpp"
#include "avgflow/types.hpp"

namespace avgflow {

/// Two-sample energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| with all pairs
/// (V-statistic): nonnegative, and exactly zero for identical clouds.
double energy_distance(const std::vector<Vector>& a, const std::vector<Vector>& b);

struct PermutationTest {
  double statistic = 0.0;
  std::vector<double> null;  // statistic under random relabelling of the pooled cloud
  double quantile(double q) const;
  double p_value() const;
};

PermutationTest energy_permutation_test(const std::vector<Vector>& a, const std::vector<Vector>& b,
                                        int permutations, std::uint64_t seed);

/// sqrt of the mean over `projections` seeded unit directions of the 1-D
/// squared 2-Wasserstein distance between projected clouds (quantile
/// matching when sizes differ).
double sliced_wasserstein2(const std::vector<Vector>& a, const std::vector<Vector>& b, int projections = 128,
                           std::uint64_t seed = 0);

Vector sample_mean(const std::vector<Vector>& cloud);
/// Unbiased (n-1) sample covariance.
Matrix sample_covariance(const std::vector<Vector>& cloud);

struct CheckpointStats {
  double t = 0.0;
  int index = 0;
  Vector mean_a;
  Vector mean_b;
  /// |mean_a - mean_b| per coordinate in units of the standard error of the difference.
  Vector mean_diff_se;
  Matrix cov_a;
  Matrix cov_b;
  /// ‖cov_a - cov_b‖_F / ‖cov_b‖_F.
  double cov_rel_diff = 0.0;
};

struct MetricsReport {
  Vector terminal_mean;
  Matrix terminal_cov;
  Vector reference_mean;
  Matrix reference_cov;
  double energy_distance = 0.0;
  double sliced_w2 = 0.0;
  /// Checkpoints at t in {0.25, 0.5, 0.75, 1} · t_f (terminal only against a bare cloud).
  std::vector<CheckpointStats> checkpoints;

  double max_mean_se(bool include_terminal = true) const;
  double terminal_cov_rel_diff() const { return checkpoints.back().cov_rel_diff; }
};

CheckpointStats compare_clouds(const std::vector<Vector>& a, const std::vector<Vector>& b);

MetricsReport compare_laws(const RolloutEnsemble& e1, const RolloutEnsemble& e2);
MetricsReport compare_laws(const RolloutEnsemble& e1, const std::vector<Vector>& cloud);

}  // namespace avgflow
