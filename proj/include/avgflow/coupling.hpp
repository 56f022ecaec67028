#pragma once

#include <cstddef>
#include <vector>

#include "avgflow/kernel.hpp"
#include "avgflow/types.hpp"

namespace avgflow {

struct CouplingPlan {
  /// permutation[i] is the target paired with source i.
  std::vector<std::size_t> permutation;
  /// ‖x0^i - xf^{π(i)}‖² per source.
  std::vector<double> costs;
  double total_cost = 0.0;
};

/// Default cap on the assignment size; the solver is O(N³).
inline constexpr std::size_t kMaxAssignmentSize = 4096;

/// Exact minimum-cost bijection for C_ij = ‖x0^i - xf^j‖² (Hungarian method
/// with potentials). Among equal-cost columns the lowest index is chosen.
CouplingPlan ot_assignment(const std::vector<Vector>& sources, const std::vector<Vector>& targets,
                           std::size_t max_size = kMaxAssignmentSize);

/// Total squared cost of an arbitrary pairing.
double assignment_cost(const std::vector<Vector>& sources, const std::vector<Vector>& targets,
                       const std::vector<std::size_t>& permutation);

/// Teacher controls u^{z^i}(t_j) = K(t_j) Δ^i with Δ^i = T(x0^i) - M(t_f) x0^i.
struct TeacherSet {
  TimeGrid grid;
  std::vector<Vector> sources;
  std::vector<Vector> paired_targets;
  std::vector<Vector> residuals;
  std::vector<Matrix> gains;  // K(t_j), j = 0..n

  std::size_t size() const { return residuals.size(); }
  Vector control(std::size_t i, int t_index) const { return gains.at(t_index) * residuals.at(i); }
};

TeacherSet teacher_controls(const KernelTable& table, const CouplingPlan& plan,
                            const std::vector<Vector>& sources, const std::vector<Vector>& targets);

}  // namespace avgflow
