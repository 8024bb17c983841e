#pragma once

#include <cstdint>
#include <limits>

namespace patchlab {

// Counter-based generator: the n-th output of a stream is a pure function of
// (key, n). Child streams are derived with split(), so work can be handed out
// per example index without depending on how many threads consume it.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ ^ mix(counter_++ * 0x9e3779b97f4a7c15ULL + 1)); }

    // Independent child stream; does not advance this generator.
    Rng split(std::uint64_t index) const {
        Rng child(0);
        child.key_ = mix(key_ + 0xbb67ae8584caa73bULL * (index + 1));
        return child;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller; caches the second deviate.
    double normal();

    std::uint64_t key() const { return key_; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace patchlab
