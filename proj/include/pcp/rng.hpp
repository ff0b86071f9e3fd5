#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pcp {

// Deterministic splitmix64 stream. The standard library engines are
// reproducible, but the <random> distributions are not pinned by the
// standard, so all draws are derived here from raw 64-bit outputs.
// Every consumer gets its own named sub-stream via fork(); forks derive
// from the construction seed, not the consumption state, so the set of
// streams a run uses is stable under code reordering.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1), 53-bit resolution.
    double u01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    bool bernoulli(double p) { return u01() < p; }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        const double u1 = 1.0 - u01(); // (0,1], keeps log finite
        const double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Categorical draw over unnormalized nonnegative weights.
    template <typename Weights>
    std::size_t categorical(const Weights& w) {
        double total = 0.0;
        for (double v : w) total += v;
        double r = u01() * total;
        std::size_t last = 0;
        std::size_t i = 0;
        for (double v : w) {
            if (v > 0.0) {
                if (r < v) return i;
                r -= v;
                last = i;
            }
            ++i;
        }
        return last; // rounding spill lands on the last positive weight
    }

    Rng fork(std::string_view name) const {
        return Rng(mix(seed_ ^ fnv1a(name)));
    }

    Rng fork(std::uint64_t index) const {
        return Rng(mix(seed_ ^ mix(index + 0x51ED2701CB1E5000ull)));
    }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return h;
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
        return z ^ (z >> 33);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
};

} // namespace pcp
