#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "avgflow/bridge.hpp"
#include "avgflow/coupling.hpp"
#include "avgflow/kernel.hpp"
#include "avgflow/learn.hpp"
#include "avgflow/metrics.hpp"

namespace avgflow {

/// Shortest round-trip-safe fixed formatting used by every CSV writer.
std::string format_double(double v);

/// One file per array with columns j,k,row,col,value: phi.csv holds
/// Φ(t_j, 0) (every Φ(t_j, t_k) equals Φ(t_{j-k}, 0)); the single-time
/// arrays M, G_fwd, G_bwd, S, Y, Z, K use k = j.
void write_kernel_bundle(const std::filesystem::path& dir, const KernelTable& table);

/// Columns path_id,t,x1..xd,u1..um; the control cells are empty where a
/// path has no control (t_f for stochastic paths).
void write_trajectories(const std::filesystem::path& file, const std::vector<BridgePath>& paths,
                        int dim_control);

void write_plan(const std::filesystem::path& file, const CouplingPlan& plan);
/// Columns i,t,u1..um at every `time_stride`-th node (t_f always included).
void write_teacher(const std::filesystem::path& file, const TeacherSet& teacher, int time_stride = 1);
void write_train_report(const std::filesystem::path& file, const TrainReport& report);
/// Flat key = value text plus a CSV of per-checkpoint statistics.
void write_metrics(const std::filesystem::path& text_file, const std::filesystem::path& csv_file,
                   const MetricsReport& report);

void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace avgflow
