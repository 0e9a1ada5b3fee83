#pragma once

// Deterministic randomness. mt19937_64 supplies the bits; uniform and normal
// variates are derived by hand (not via std::*_distribution, whose algorithms
// are implementation-defined) so artifacts are bit-stable across toolchains.

#include <cmath>
#include <cstdint>
#include <random>

#include "fplab/common.hpp"

namespace fplab {

// splitmix64 step; used to derive independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; one fresh pair per call keeps the stream position
    // independent of call parity at the cost of a discarded variate.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::size_t index(std::size_t n) {
        check_arg(n > 0, "Rng::index: empty range");
        return static_cast<std::size_t>(uniform01() * static_cast<double>(n)) % n;
    }

    Vec normal_vec(std::size_t n, double stddev = 1.0) {
        Vec v(n);
        for (double& x : v) x = normal(0.0, stddev);
        return v;
    }

    Vec uniform_vec(std::size_t n, double lo, double hi) {
        Vec v(n);
        for (double& x : v) x = uniform(lo, hi);
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with our own index draws (std::shuffle's use of the
        // engine is implementation-defined).
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace fplab
