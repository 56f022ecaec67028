#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include "avgflow/types.hpp"

namespace avgflow {

/// Counter-based generator: output k of stream s is a pure function of
/// (seed, s, k), so every path of an ensemble owns an independent stream
/// and results do not depend on scheduling order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}

  double next() { return normal_(rng_); }
  Vector next(int dim);
  double uniform() { return uniform_(rng_); }
  CounterRng& engine() { return rng_; }

 private:
  CounterRng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace avgflow
