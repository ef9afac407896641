#pragma once

#include <cmath>
#include <cstdint>

namespace bloodnet {

/// Counter-based random generator. Every draw is a pure function of
/// (seed, stream, counter), so independent streams can run in parallel and
/// still reproduce bit-identically for a fixed seed.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    /// Derive an independent child stream (e.g. one per Monte Carlo walker).
    CounterRng split(std::uint64_t substream) const {
        return CounterRng(mix(seed_ ^ 0x9e3779b97f4a7c15ULL, substream), stream_ + 1);
    }

    std::uint64_t next_u64() {
        return mix(mix(seed_ ^ stream_ * 0xbf58476d1ce4e5b9ULL, counter_++), 0x94d049bb133111ebULL);
    }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (uses two uniforms per pair).
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Exponential with rate lambda.
    double next_exponential(double lambda) {
        double u = 0.0;
        while (u == 0.0) u = next_double();
        return -std::log(u) / lambda;
    }

private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + b + 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace bloodnet
