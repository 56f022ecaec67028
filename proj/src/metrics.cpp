#include "avgflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avgflow/errors.hpp"
#include "avgflow/rng.hpp"

namespace avgflow {

namespace {

void check_cloud(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("metrics: empty sample cloud");
  for (const auto& x : a) {
    if (x.size() != a[0].size()) throw InvalidArgument("metrics: inconsistent dimensions");
  }
  for (const auto& x : b) {
    if (x.size() != a[0].size()) throw InvalidArgument("metrics: inconsistent dimensions");
  }
}

// Row-major packed copy for tight pair loops.
std::vector<double> pack(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  const auto d = static_cast<std::size_t>(a[0].size());
  std::vector<double> out;
  out.reserve((a.size() + b.size()) * d);
  for (const auto* cloud : {&a, &b}) {
    for (const auto& x : *cloud) out.insert(out.end(), x.data(), x.data() + d);
  }
  return out;
}

double dist(const double* p, const double* q, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double t = p[k] - q[k];
    s += t * t;
  }
  return std::sqrt(s);
}

// Energy distance of the pooled points split by label (0 -> first sample).
double labelled_energy(const std::vector<double>& pts, std::size_t d, const std::vector<char>& label,
                       std::size_t na, std::size_t nb) {
  const std::size_t n = label.size();
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = pts.data() + i * d;
    double raa = 0.0, rbb = 0.0, rab = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r = dist(p, pts.data() + j * d, d);
      if (label[i] != label[j]) {
        rab += r;
      } else if (label[i] == 0) {
        raa += r;
      } else {
        rbb += r;
      }
    }
    aa += raa;
    bb += rbb;
    ab += rab;
  }
  const double a = static_cast<double>(na);
  const double b = static_cast<double>(nb);
  const double value = 2.0 * ab / (a * b) - 2.0 * aa / (a * a) - 2.0 * bb / (b * b);
  return std::max(0.0, value);
}

}  // namespace

double energy_distance(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  check_cloud(a, b);
  const auto d = static_cast<std::size_t>(a[0].size());
  std::vector<char> label(a.size() + b.size(), 0);
  std::fill(label.begin() + static_cast<std::ptrdiff_t>(a.size()), label.end(), 1);
  return labelled_energy(pack(a, b), d, label, a.size(), b.size());
}

double PermutationTest::quantile(double q) const {
  if (null.empty()) return 0.0;
  std::vector<double> s = null;
  std::sort(s.begin(), s.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double PermutationTest::p_value() const {
  const auto exceed = std::count_if(null.begin(), null.end(), [&](double v) { return v >= statistic; });
  return (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(null.size()));
}

PermutationTest energy_permutation_test(const std::vector<Vector>& a, const std::vector<Vector>& b,
                                        int permutations, std::uint64_t seed) {
  check_cloud(a, b);
  if (permutations < 1) throw InvalidArgument("energy_permutation_test: permutations must be >= 1");
  const auto d = static_cast<std::size_t>(a[0].size());
  const std::vector<double> pts = pack(a, b);
  std::vector<char> label(a.size() + b.size(), 0);
  std::fill(label.begin() + static_cast<std::ptrdiff_t>(a.size()), label.end(), 1);
  PermutationTest test;
  test.statistic = labelled_energy(pts, d, label, a.size(), b.size());
  CounterRng rng(seed, 0x9e37);
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(label.begin(), label.end(), rng);
    test.null.push_back(labelled_energy(pts, d, label, a.size(), b.size()));
  }
  return test;
}

double sliced_wasserstein2(const std::vector<Vector>& a, const std::vector<Vector>& b, int projections,
                           std::uint64_t seed) {
  check_cloud(a, b);
  if (projections < 1) throw InvalidArgument("sliced_wasserstein2: projections must be >= 1");
  const int d = static_cast<int>(a[0].size());
  GaussianStream gauss(seed, 0x51ced);
  const std::size_t levels = std::max(a.size(), b.size());
  std::vector<double> pa(a.size()), pb(b.size());
  double total = 0.0;
  for (int p = 0; p < projections; ++p) {
    Vector dir = gauss.next(d);
    dir /= dir.norm();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = dir.dot(a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = dir.dot(b[i]);
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    double acc = 0.0;
    for (std::size_t k = 0; k < levels; ++k) {
      const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(levels);
      const double qa = pa[std::min(pa.size() - 1, static_cast<std::size_t>(u * static_cast<double>(pa.size())))];
      const double qb = pb[std::min(pb.size() - 1, static_cast<std::size_t>(u * static_cast<double>(pb.size())))];
      acc += (qa - qb) * (qa - qb);
    }
    total += acc / static_cast<double>(levels);
  }
  return std::sqrt(total / projections);
}

Vector sample_mean(const std::vector<Vector>& cloud) {
  if (cloud.empty()) throw InvalidArgument("sample_mean: empty cloud");
  Vector m = Vector::Zero(cloud[0].size());
  for (const auto& x : cloud) m += x;
  return m / static_cast<double>(cloud.size());
}

Matrix sample_covariance(const std::vector<Vector>& cloud) {
  const Vector m = sample_mean(cloud);
  Matrix c = Matrix::Zero(m.size(), m.size());
  if (cloud.size() < 2) return c;
  for (const auto& x : cloud) {
    const Vector dx = x - m;
    c.noalias() += dx * dx.transpose();
  }
  return c / static_cast<double>(cloud.size() - 1);
}

CheckpointStats compare_clouds(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  check_cloud(a, b);
  CheckpointStats s;
  s.mean_a = sample_mean(a);
  s.mean_b = sample_mean(b);
  s.cov_a = sample_covariance(a);
  s.cov_b = sample_covariance(b);
  const Vector se = (s.cov_a.diagonal() / static_cast<double>(a.size()) +
                     s.cov_b.diagonal() / static_cast<double>(b.size())).cwiseSqrt();
  s.mean_diff_se = Vector::Zero(s.mean_a.size());
  for (Eigen::Index k = 0; k < se.size(); ++k) {
    const double diff = std::abs(s.mean_a(k) - s.mean_b(k));
    s.mean_diff_se(k) = se(k) > 0.0 ? diff / se(k) : (diff == 0.0 ? 0.0 : INFINITY);
  }
  const double ref = s.cov_b.norm();
  const double gap = (s.cov_a - s.cov_b).norm();
  s.cov_rel_diff = ref > 0.0 ? gap / ref : (gap == 0.0 ? 0.0 : INFINITY);
  return s;
}

double MetricsReport::max_mean_se(bool include_terminal) const {
  double worst = 0.0;
  const std::size_t count = include_terminal ? checkpoints.size() : checkpoints.size() - 1;
  for (std::size_t c = 0; c < count; ++c) worst = std::max(worst, checkpoints[c].mean_diff_se.maxCoeff());
  return worst;
}

namespace {

MetricsReport terminal_report(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  MetricsReport r;
  r.terminal_mean = sample_mean(a);
  r.terminal_cov = sample_covariance(a);
  r.reference_mean = sample_mean(b);
  r.reference_cov = sample_covariance(b);
  r.energy_distance = energy_distance(a, b);
  r.sliced_w2 = sliced_wasserstein2(a, b);
  return r;
}

}  // namespace

MetricsReport compare_laws(const RolloutEnsemble& e1, const RolloutEnsemble& e2) {
  if (e1.size() == 0 || e2.size() == 0) throw InvalidArgument("compare_laws: empty ensemble");
  if (!(e1.paths[0].grid == e2.paths[0].grid)) throw InvalidArgument("compare_laws: ensembles on different grids");
  MetricsReport r = terminal_report(e1.terminal_states(), e2.terminal_states());
  const TimeGrid& grid = e1.paths[0].grid;
  for (double q : {0.25, 0.5, 0.75, 1.0}) {
    const int j = grid.index_of(q * grid.t_final());
    CheckpointStats s = compare_clouds(e1.states_at(j), e2.states_at(j));
    s.t = grid.node(j);
    s.index = j;
    r.checkpoints.push_back(std::move(s));
  }
  return r;
}

MetricsReport compare_laws(const RolloutEnsemble& e1, const std::vector<Vector>& cloud) {
  if (e1.size() == 0 || cloud.empty()) throw InvalidArgument("compare_laws: empty ensemble");
  const std::vector<Vector> terminal = e1.terminal_states();
  MetricsReport r = terminal_report(terminal, cloud);
  CheckpointStats s = compare_clouds(terminal, cloud);
  s.t = e1.paths[0].grid.t_final();
  s.index = e1.paths[0].grid.n_steps();
  r.checkpoints.push_back(std::move(s));
  return r;
}

}  // namespace avgflow
