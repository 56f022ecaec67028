#pragma once

#include <cstdint>
#include <vector>

#include "avgflow/bridge.hpp"
#include "avgflow/kernel.hpp"
#include "avgflow/types.hpp"

namespace avgflow {

struct GaussianComponent {
  double weight = 1.0;
  Vector mean;
  Matrix cov;
};

class GaussianMixture {
 public:
  GaussianMixture() = default;
  /// Validates on construction; throws ConfigError.
  explicit GaussianMixture(std::vector<GaussianComponent> components);
  static GaussianMixture single(Vector mean, Matrix cov);

  int dim() const { return components_.empty() ? 0 : static_cast<int>(components_[0].mean.size()); }
  std::size_t size() const { return components_.size(); }
  const GaussianComponent& component(std::size_t i) const { return components_.at(i); }
  const std::vector<GaussianComponent>& components() const { return components_; }

  Vector mean() const;
  Matrix covariance() const;

 private:
  std::vector<GaussianComponent> components_;
};

/// `count` equally spaced isotropic components of variance `sigma2` on a
/// circle of `radius` around `center` (2-D), equal weights.
GaussianMixture ring_mixture(int count, double radius, double sigma2, const Vector& center);

/// Picks component i with probability ω_i, then draws through an
/// eigen-factorization of Σ_i (singular covariances allowed).
std::vector<Vector> sample(const GaussianMixture& mixture, std::size_t n, std::uint64_t seed,
                           std::uint64_t stream = 0);

enum class CouplingKind { kProduct, kOptimalTransport };

struct SamplePairSet {
  std::vector<Vector> sources;
  std::vector<Vector> targets;
  CouplingKind kind = CouplingKind::kProduct;

  std::size_t size() const { return sources.size(); }
};

/// Independent draws x0^i ~ μ0, xf^i ~ μf.
SamplePairSet product_pairs(const GaussianMixture& mu0, const GaussianMixture& muf, std::size_t n,
                            std::uint64_t seed);

enum class PosteriorWeighting {
  kNormalized,  // full Gaussian densities, including det(C_i)^{-1/2}
  kLiteral,     // exponent only, as in the closed-form mixture weights
};

/// Path-independent part of E(x_f | F_t) for a Gaussian source and a
/// Gaussian-mixture target: for every grid index j and component i the
/// innovation covariance C = Y Σ_0 Y^T + Z Σ_i Z^T + ε G_{t,0}, its inverse,
/// the gain Γ_i = Σ_i Z^T C^{-1} and the offset Y m_0 + Z m_i.
class MixturePosterior {
 public:
  MixturePosterior(const KernelTable& table, GaussianMixture source, GaussianMixture target,
                   double epsilon, PosteriorWeighting weighting = PosteriorWeighting::kNormalized);

  struct Entry {
    Matrix innovation_inverse;
    Matrix gain;
    Vector offset;
    double log_prefactor = 0.0;  // log ω_i - ½ log det C (normalized mode)
    bool valid = true;
  };

  const KernelTable& table() const { return *table_; }
  const GaussianMixture& source() const { return source_; }
  const GaussianMixture& target() const { return target_; }
  double epsilon() const { return epsilon_; }
  PosteriorWeighting weighting() const { return weighting_; }
  const Entry& entry(int t_index, std::size_t component) const;

 private:
  const KernelTable* table_;
  GaussianMixture source_;
  GaussianMixture target_;
  double epsilon_;
  PosteriorWeighting weighting_;
  std::vector<Entry> entries_;  // (n+1) x L, row-major in t
};

/// Per-path state of the closed-form posterior: the path's x_0, the current
/// simulated state and the running E(R_ε(t)).
struct PosteriorContext {
  PosteriorContext(const MixturePosterior& posterior, Vector x0);

  const MixturePosterior* posterior;
  Vector x0;
  Vector state;
  Vector mean_r;
};

/// E(x_f | F_t) with log-sum-exp normalized weights. Throws
/// DegeneratePosterior when no component carries finite weight.
Vector posterior_mean(const PosteriorContext& ctx, int t_index);

/// -√ε Φ(t_f,t)^T D(t) + K(t)(E(x_f|F_t) - M(t_f) x_0).
Vector posterior_control(const PosteriorContext& ctx, const VolterraState& vstate, int t_index);

/// Recomputes E(R_ε(t_j)) = -√ε Σ_{k<j} Φ(t_j,t_k) Φ(t_f,t_k)^T D(t_k) dt
/// from the stored memory values D(t_0..t_{j-1}).
void update_mean_r(PosteriorContext& ctx, int t_index, const std::vector<Vector>& memory_history);
PosteriorContext advance_mean_r(const PosteriorContext& ctx, int t_index,
                                const std::vector<Vector>& memory_history);

}  // namespace avgflow
