#include "avgflow/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "avgflow/errors.hpp"
#include "avgflow/rng.hpp"

namespace avgflow {

namespace {

constexpr double kTolerance = 1e-12;

Matrix covariance_factor(const Matrix& cov) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector lambda = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * lambda.asDiagonal();
}

}  // namespace

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("mixture needs at least one component");
  const Eigen::Index d = components_[0].mean.size();
  if (d == 0) throw ConfigError("mixture component has empty mean");
  double total = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    if (c.mean.size() != d || c.cov.rows() != d || c.cov.cols() != d) {
      throw ConfigError(fmt::format("mixture component {} has inconsistent dimensions", i));
    }
    if (!c.mean.allFinite() || !c.cov.allFinite() || !std::isfinite(c.weight)) {
      throw ConfigError(fmt::format("mixture component {} is not finite", i));
    }
    if (c.weight < 0.0) throw ConfigError(fmt::format("mixture component {} has negative weight", i));
    const double scale = std::max(1.0, c.cov.cwiseAbs().maxCoeff());
    if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() > kTolerance * scale) {
      throw ConfigError(fmt::format("covariance of component {} is not symmetric", i));
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(c.cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -kTolerance * scale) {
      throw ConfigError(fmt::format("covariance of component {} is not positive semidefinite", i));
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > kTolerance) {
    throw ConfigError(fmt::format("mixture weights sum to {:.17g}, expected 1", total));
  }
}

GaussianMixture GaussianMixture::single(Vector mean, Matrix cov) {
  return GaussianMixture({GaussianComponent{1.0, std::move(mean), std::move(cov)}});
}

Vector GaussianMixture::mean() const {
  Vector m = Vector::Zero(dim());
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

Matrix GaussianMixture::covariance() const {
  const Vector mu = mean();
  Matrix cov = Matrix::Zero(dim(), dim());
  for (const auto& c : components_) {
    const Vector dm = c.mean - mu;
    cov += c.weight * (c.cov + dm * dm.transpose());
  }
  return cov;
}

GaussianMixture ring_mixture(int count, double radius, double sigma2, const Vector& center) {
  if (count < 1) throw ConfigError("ring mixture needs at least one component");
  if (center.size() != 2) throw ConfigError("ring mixture is two-dimensional");
  if (!(sigma2 >= 0.0)) throw ConfigError("ring mixture variance must be nonnegative");
  std::vector<GaussianComponent> comps;
  comps.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / count;
    Vector mean = center;
    mean(0) += radius * std::cos(angle);
    mean(1) += radius * std::sin(angle);
    comps.push_back({1.0 / count, mean, sigma2 * Matrix::Identity(2, 2)});
  }
  // Equal weights summing to 1 within rounding; fix the last one exactly.
  double partial = 0.0;
  for (int i = 0; i + 1 < count; ++i) partial += comps[i].weight;
  comps.back().weight = 1.0 - partial;
  return GaussianMixture(std::move(comps));
}

std::vector<Vector> sample(const GaussianMixture& mixture, std::size_t n, std::uint64_t seed,
                           std::uint64_t stream) {
  if (n == 0) throw InvalidArgument("sample: n must be at least 1");
  std::vector<Matrix> factors;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : mixture.components()) {
    factors.push_back(covariance_factor(c.cov));
    acc += c.weight;
    cumulative.push_back(acc);
  }
  GaussianStream gauss(seed, stream);
  std::vector<Vector> out;
  out.reserve(n);
  const int d = mixture.dim();
  for (std::size_t s = 0; s < n; ++s) {
    const double u = gauss.uniform() * acc;
    std::size_t i = std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
    i = std::min(i, cumulative.size() - 1);
    const auto& c = mixture.component(i);
    out.push_back(c.mean + factors[i] * gauss.next(d));
  }
  return out;
}

SamplePairSet product_pairs(const GaussianMixture& mu0, const GaussianMixture& muf, std::size_t n,
                            std::uint64_t seed) {
  SamplePairSet set;
  set.kind = CouplingKind::kProduct;
  set.sources = sample(mu0, n, seed, 0);
  set.targets = sample(muf, n, seed, 1);
  return set;
}

MixturePosterior::MixturePosterior(const KernelTable& table, GaussianMixture source,
                                   GaussianMixture target, double epsilon,
                                   PosteriorWeighting weighting)
    : table_(&table),
      source_(std::move(source)),
      target_(std::move(target)),
      epsilon_(epsilon),
      weighting_(weighting) {
  if (source_.size() != 1) throw ConfigError("the closed-form posterior needs a single Gaussian source");
  if (source_.dim() != table.dim_state() || target_.dim() != table.dim_state()) {
    throw ConfigError("source/target dimension does not match the system");
  }
  if (!(epsilon >= 0.0)) throw InvalidArgument("epsilon must be >= 0");

  const int n = table.n_steps();
  const std::size_t l = target_.size();
  const int d = table.dim_state();
  const auto& s0 = source_.component(0);
  entries_.resize(static_cast<std::size_t>(n + 1) * l);
  for (int j = 0; j <= n; ++j) {
    const Matrix& y = table.y(j);
    const Matrix& z = table.z(j);
    const Matrix base = y * s0.cov * y.transpose() + epsilon * table.gramian_forward(j);
    for (std::size_t i = 0; i < l; ++i) {
      const auto& ci = target_.component(i);
      Entry& e = entries_[static_cast<std::size_t>(j) * l + i];
      Matrix c = base + z * ci.cov * z.transpose();
      c = 0.5 * (c + c.transpose());
      double log_det = 0.0;
      if (c.cwiseAbs().maxCoeff() == 0.0) {
        // Fully deterministic observation (t = 0 with a point-mass source).
        e.innovation_inverse = Matrix::Zero(d, d);
      } else if (!invert_spd_with_jitter(c, &e.innovation_inverse, &log_det)) {
        e.valid = false;
        e.innovation_inverse = Matrix::Zero(d, d);
      }
      e.gain = ci.cov * z.transpose() * e.innovation_inverse;
      e.offset = y * s0.mean + z * ci.mean;
      e.log_prefactor = (ci.weight > 0.0 ? std::log(ci.weight) : -std::numeric_limits<double>::infinity());
      if (weighting == PosteriorWeighting::kNormalized) e.log_prefactor -= 0.5 * log_det;
    }
  }
}

const MixturePosterior::Entry& MixturePosterior::entry(int t_index, std::size_t component) const {
  if (t_index < 0 || t_index > table_->n_steps() || component >= target_.size()) {
    throw InvalidArgument("MixturePosterior::entry: index out of range");
  }
  return entries_[static_cast<std::size_t>(t_index) * target_.size() + component];
}

PosteriorContext::PosteriorContext(const MixturePosterior& p, Vector initial)
    : posterior(&p), x0(std::move(initial)) {
  if (x0.size() != p.table().dim_state()) throw InvalidArgument("PosteriorContext: x0 dimension");
  state = x0;
  mean_r = Vector::Zero(x0.size());
}

Vector posterior_mean(const PosteriorContext& ctx, int t_index) {
  const MixturePosterior& post = *ctx.posterior;
  const std::size_t l = post.target().size();
  std::vector<double> log_w(l);
  std::vector<Vector> cond(l);
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < l; ++i) {
    const auto& e = post.entry(t_index, i);
    if (!e.valid) {
      throw DegeneratePosterior(
          fmt::format("innovation covariance of component {} is singular at index {}", i, t_index));
    }
    const Vector r = ctx.state - e.offset - ctx.mean_r;
    log_w[i] = e.log_prefactor - 0.5 * r.dot(e.innovation_inverse * r);
    cond[i] = post.target().component(i).mean + e.gain * r;
    if (std::isnan(log_w[i])) log_w[i] = -std::numeric_limits<double>::infinity();
    max_log = std::max(max_log, log_w[i]);
  }
  if (!std::isfinite(max_log)) {
    throw DegeneratePosterior(fmt::format("all mixture weights vanish at index {}", t_index));
  }
  double total = 0.0;
  Vector mean = Vector::Zero(ctx.state.size());
  for (std::size_t i = 0; i < l; ++i) {
    const double w = std::exp(log_w[i] - max_log);
    if (w == 0.0) continue;
    total += w;
    mean += w * cond[i];
  }
  mean /= total;
  if (!mean.allFinite()) throw DegeneratePosterior(fmt::format("non-finite posterior mean at index {}", t_index));
  return mean;
}

Vector posterior_control(const PosteriorContext& ctx, const VolterraState& vstate, int t_index) {
  const KernelTable& table = ctx.posterior->table();
  const int n = table.n_steps();
  if (t_index >= n) throw NearTerminalSingularity("the posterior control is undefined at t_f", t_index);
  const Vector target = posterior_mean(ctx, t_index);
  Vector u = table.gain(t_index) * (target - table.transition(n) * ctx.x0);
  const double eps = ctx.posterior->epsilon();
  if (eps > 0.0) u.noalias() -= std::sqrt(eps) * (table.phi(n, t_index).transpose() * vstate.memory);
  return u;
}

void update_mean_r(PosteriorContext& ctx, int t_index, const std::vector<Vector>& memory_history) {
  const KernelTable& table = ctx.posterior->table();
  const int n = table.n_steps();
  if (t_index < 0 || t_index > n) throw InvalidArgument("update_mean_r: index out of range");
  if (static_cast<int>(memory_history.size()) < t_index) {
    throw InvalidArgument("update_mean_r: memory history shorter than the index");
  }
  const double eps = ctx.posterior->epsilon();
  Vector acc = Vector::Zero(table.dim_state());
  if (eps > 0.0) {
    for (int k = 0; k < t_index; ++k) {
      acc.noalias() += table.phi_lag(t_index - k) * (table.phi(n, k).transpose() * memory_history[k]);
    }
    acc *= -std::sqrt(eps) * table.grid().dt();
  }
  ctx.mean_r = acc;
}

PosteriorContext advance_mean_r(const PosteriorContext& ctx, int t_index,
                                const std::vector<Vector>& memory_history) {
  PosteriorContext next = ctx;
  update_mean_r(next, t_index, memory_history);
  return next;
}

}  // namespace avgflow
