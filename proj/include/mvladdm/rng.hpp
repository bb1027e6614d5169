#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mvladdm {

// Seeded random stream with portable, implementation-independent draws.
// std::uniform_real_distribution and friends are implementation-defined, so
// uniform/gaussian are derived from raw mt19937_64 output directly; the same
// seed gives the same values on every platform.
class Rng {
 public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one spare value cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free modulo is biased for huge n; everything here draws
        // from small ranges, so scale the 53-bit uniform instead.
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    // Independent child stream for a fixed purpose. Distinct tags give
    // decorrelated streams from one root seed.
    Rng fork(std::uint64_t tag) const { return Rng(mix(root_seed_snapshot(), tag)); }

    std::uint64_t raw() { return engine_(); }

 private:
    explicit Rng(std::mt19937_64 engine) : engine_(engine) {}

    std::uint64_t root_seed_snapshot() const {
        // Engines are cheap to copy; hash a copy's next output as the fork base.
        std::mt19937_64 copy = engine_;
        return copy();
    }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        // splitmix64 finalizer over the pair.
        std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mvladdm
