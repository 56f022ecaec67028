#include "avgflow/rng.hpp"

namespace avgflow {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL))) {}

CounterRng::result_type CounterRng::operator()() {
  // Two rounds over (key, counter) keep neighbouring streams decorrelated.
  const std::uint64_t c = counter_++;
  return mix64(mix64(key_ ^ (c * 0x9e3779b97f4a7c15ULL)) + c);
}

Vector GaussianStream::next(int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal_(rng_);
  return v;
}

}  // namespace avgflow
