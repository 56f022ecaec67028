#include "avgflow/coupling.hpp"

#include <limits>

#include <fmt/format.h>

#include "avgflow/errors.hpp"

namespace avgflow {

CouplingPlan ot_assignment(const std::vector<Vector>& sources, const std::vector<Vector>& targets,
                           std::size_t max_size) {
  const std::size_t n = sources.size();
  if (n == 0) throw InvalidArgument("ot_assignment: empty point sets");
  if (targets.size() != n) {
    throw InvalidArgument(fmt::format("ot_assignment: {} sources but {} targets", n, targets.size()));
  }
  if (n > max_size) throw InvalidArgument(fmt::format("ot_assignment: N={} exceeds the cap {}", n, max_size));

  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sources[i].size() != targets[0].size()) throw InvalidArgument("ot_assignment: dimension mismatch");
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (sources[i] - targets[j]).squaredNorm();
  }

  // 1-based shortest augmenting path with row/column potentials u, v.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  CouplingPlan plan;
  plan.permutation.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) plan.permutation[p[j] - 1] = j - 1;
  plan.costs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    plan.costs[i] = cost[i * n + plan.permutation[i]];
    plan.total_cost += plan.costs[i];
  }
  return plan;
}

double assignment_cost(const std::vector<Vector>& sources, const std::vector<Vector>& targets,
                       const std::vector<std::size_t>& permutation) {
  if (permutation.size() != sources.size()) throw InvalidArgument("assignment_cost: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    total += (sources[i] - targets.at(permutation[i])).squaredNorm();
  }
  return total;
}

TeacherSet teacher_controls(const KernelTable& table, const CouplingPlan& plan,
                            const std::vector<Vector>& sources, const std::vector<Vector>& targets) {
  const std::size_t n = sources.size();
  if (plan.permutation.size() != n || targets.size() != n) {
    throw InvalidArgument("teacher_controls: plan does not match the point sets");
  }
  std::vector<char> seen(n, 0);
  for (std::size_t j : plan.permutation) {
    if (j >= n || seen[j]) throw InvalidArgument("teacher_controls: plan is not a permutation");
    seen[j] = 1;
  }
  TeacherSet set;
  set.grid = table.grid();
  const Matrix& m_f = table.transition(table.n_steps());
  for (std::size_t i = 0; i < n; ++i) {
    if (sources[i].size() != table.dim_state()) throw InvalidArgument("teacher_controls: dimension mismatch");
    set.sources.push_back(sources[i]);
    set.paired_targets.push_back(targets[plan.permutation[i]]);
    set.residuals.push_back(targets[plan.permutation[i]] - m_f * sources[i]);
  }
  for (int j = 0; j <= table.n_steps(); ++j) set.gains.push_back(table.gain(j));
  return set;
}

}  // namespace avgflow
