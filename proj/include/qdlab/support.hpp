#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "qdlab/qd_core.hpp"

// Deterministic sampling and bounded parallelism helpers shared by the
// experiment drivers and the CLI.

namespace qdlab {

// SplitMix64: tiny, fully deterministic, identical across platforms.
// Used instead of <random> distributions, whose output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in the closed disk of the given radius (rejection from the square).
  cplx in_disk(double radius) {
    for (;;) {
      double x = 2.0 * uniform01() - 1.0;
      double y = 2.0 * uniform01() - 1.0;
      if (x * x + y * y <= 1.0) return cplx(radius * x, radius * y);
    }
  }

 private:
  std::uint64_t state_;
};

// Effective worker count: min(hardware, QDLAB_THREADS if set, jobs).
int thread_budget(int jobs);

// Runs fn(i) for i in [0, jobs); order of execution is unspecified but the
// caller's output slots make results deterministic.
void parallel_for(int jobs, const std::function<void(int)>& fn);

}  // namespace qdlab
