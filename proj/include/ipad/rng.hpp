#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ipad {

/// Deterministic random source. mt19937_64 output is fixed by the standard;
/// the derived draws below avoid std::*_distribution, whose sequences differ
/// between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, bound). Modulo bias is unobservable for the tiny
    /// bounds used here.
    std::size_t uniform_index(std::size_t bound) {
        return static_cast<std::size_t>(gen_() % static_cast<std::uint64_t>(bound));
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform_real() { return (gen_() >> 11) * (1.0 / 9007199254740992.0); }

    /// Uniform in [lo, hi).
    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    /// Standard normal via Box-Muller.
    double normal();

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Random permutation of {0, ..., n-1}.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ipad
