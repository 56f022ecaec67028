#include "avgflow/io.hpp"

#include <fstream>
#include <functional>

#include <fmt/format.h>

#include "avgflow/errors.hpp"

namespace avgflow {

namespace {

std::ofstream open_file(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write {}", file.string()));
  return out;
}

void write_array(const std::filesystem::path& file, int count, bool lag_only,
                 const std::function<const Matrix&(int)>& get) {
  std::ofstream out = open_file(file);
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "j,k,row,col,value\n");
  for (int j = 0; j <= count; ++j) {
    const Matrix& a = get(j);
    const int k = lag_only ? 0 : j;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        fmt::format_to(std::back_inserter(buf), "{},{},{},{},{:.17g}\n", j, k, r, c, a(r, c));
      }
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

void write_kernel_bundle(const std::filesystem::path& dir, const KernelTable& table) {
  std::filesystem::create_directories(dir);
  const int n = table.n_steps();
  write_array(dir / "phi.csv", n, true, [&](int j) -> const Matrix& { return table.phi_lag(j); });
  write_array(dir / "M.csv", n, false, [&](int j) -> const Matrix& { return table.transition(j); });
  write_array(dir / "G_fwd.csv", n, false, [&](int j) -> const Matrix& { return table.gramian_forward(j); });
  write_array(dir / "G_bwd.csv", n, false, [&](int j) -> const Matrix& { return table.gramian_backward(j); });
  write_array(dir / "S.csv", n, false, [&](int j) -> const Matrix& { return table.cross_gramian(j); });
  write_array(dir / "Y.csv", n, false, [&](int j) -> const Matrix& { return table.y(j); });
  write_array(dir / "Z.csv", n, false, [&](int j) -> const Matrix& { return table.z(j); });
  write_array(dir / "K.csv", n, false, [&](int j) -> const Matrix& { return table.gain(j); });
}

void write_trajectories(const std::filesystem::path& file, const std::vector<BridgePath>& paths, int dim_control) {
  std::ofstream out = open_file(file);
  fmt::memory_buffer buf;
  auto it = std::back_inserter(buf);
  const Eigen::Index d = paths.empty() ? 0 : paths[0].states[0].size();
  fmt::format_to(it, "path_id,t");
  for (Eigen::Index k = 1; k <= d; ++k) fmt::format_to(it, ",x{}", k);
  for (int k = 1; k <= dim_control; ++k) fmt::format_to(it, ",u{}", k);
  fmt::format_to(it, "\n");
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const BridgePath& path = paths[p];
    for (std::size_t j = 0; j < path.states.size(); ++j) {
      fmt::format_to(it, "{},{:.17g}", p, path.grid.node(static_cast<int>(j)));
      for (Eigen::Index k = 0; k < d; ++k) fmt::format_to(it, ",{:.17g}", path.states[j](k));
      for (int k = 0; k < dim_control; ++k) {
        if (j < path.controls.size()) {
          fmt::format_to(it, ",{:.17g}", path.controls[j](k));
        } else {
          fmt::format_to(it, ",");
        }
      }
      fmt::format_to(it, "\n");
    }
    if (buf.size() > (1u << 22)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_plan(const std::filesystem::path& file, const CouplingPlan& plan) {
  std::ofstream out = open_file(file);
  out << "i,pi_i,cost_i\n";
  for (std::size_t i = 0; i < plan.permutation.size(); ++i) {
    out << fmt::format("{},{},{:.17g}\n", i, plan.permutation[i], plan.costs[i]);
  }
}

void write_teacher(const std::filesystem::path& file, const TeacherSet& teacher, int time_stride) {
  if (time_stride < 1) throw InvalidArgument("write_teacher: time_stride must be >= 1");
  std::ofstream out = open_file(file);
  fmt::memory_buffer buf;
  auto it = std::back_inserter(buf);
  const int n = teacher.grid.n_steps();
  const Eigen::Index m = teacher.gains.empty() ? 0 : teacher.gains[0].rows();
  fmt::format_to(it, "i,t");
  for (Eigen::Index k = 1; k <= m; ++k) fmt::format_to(it, ",u{}", k);
  fmt::format_to(it, "\n");
  std::vector<int> nodes;
  for (int j = 0; j < n; j += time_stride) nodes.push_back(j);
  nodes.push_back(n);
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    for (int j : nodes) {
      const Vector u = teacher.control(i, j);
      fmt::format_to(it, "{},{:.17g}", i, teacher.grid.node(j));
      for (Eigen::Index k = 0; k < m; ++k) fmt::format_to(it, ",{:.17g}", u(k));
      fmt::format_to(it, "\n");
    }
    if (buf.size() > (1u << 22)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_train_report(const std::filesystem::path& file, const TrainReport& report) {
  std::ofstream out = open_file(file);
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& r : report.records) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.train_loss, r.val_loss, r.learning_rate);
  }
}

void write_metrics(const std::filesystem::path& text_file, const std::filesystem::path& csv_file,
                   const MetricsReport& report) {
  {
    std::ofstream out = open_file(text_file);
    for (Eigen::Index k = 0; k < report.terminal_mean.size(); ++k) {
      out << fmt::format("terminal_mean_{} = {:.17g}\n", k + 1, report.terminal_mean(k));
    }
    for (Eigen::Index r = 0; r < report.terminal_cov.rows(); ++r) {
      for (Eigen::Index c = 0; c < report.terminal_cov.cols(); ++c) {
        out << fmt::format("terminal_cov_{}{} = {:.17g}\n", r + 1, c + 1, report.terminal_cov(r, c));
      }
    }
    for (Eigen::Index k = 0; k < report.reference_mean.size(); ++k) {
      out << fmt::format("reference_mean_{} = {:.17g}\n", k + 1, report.reference_mean(k));
    }
    out << fmt::format("energy_distance = {:.17g}\n", report.energy_distance);
    out << fmt::format("sliced_w2 = {:.17g}\n", report.sliced_w2);
    if (!report.checkpoints.empty()) {
      out << fmt::format("max_mean_se = {:.17g}\n", report.max_mean_se());
      out << fmt::format("terminal_cov_rel_diff = {:.17g}\n", report.terminal_cov_rel_diff());
    }
  }
  std::ofstream out = open_file(csv_file);
  out << "t,index,max_mean_diff_se,cov_rel_diff\n";
  for (const auto& c : report.checkpoints) {
    out << fmt::format("{:.17g},{},{:.17g},{:.17g}\n", c.t, c.index, c.mean_diff_se.maxCoeff(), c.cov_rel_diff);
  }
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out = open_file(file);
  out << text;
}

}  // namespace avgflow
