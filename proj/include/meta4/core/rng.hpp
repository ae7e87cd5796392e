#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "meta4/core/error.hpp"

namespace meta4 {

// Deterministic random source. Every draw is derived from the raw
// mt19937_64 word stream with fixed arithmetic, so a given seed reproduces
// the same sequence on every platform. The std distributions are avoided
// on purpose: their output is implementation-defined.
class SeededRng {
  public:
    explicit SeededRng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the pair is cached.
    double normal();

    // Uniform index in [0, n).
    size_t uniform_index(size_t n) {
        require(n > 0, "uniform_index: n must be positive");
        size_t i = static_cast<size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (size_t i = v.size() - 1; i > 0; --i) {
            size_t j = uniform_index(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    // Independent child stream; deterministic in (seed, stream).
    SeededRng derive(uint64_t stream) const;

  private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace meta4
