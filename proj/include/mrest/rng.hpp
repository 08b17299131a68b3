#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace mrest {

/// splitmix64 step; the standard finalizer used both for seed mixing and
/// for seeding the main generator.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Absorbs a sequence of values into a single 64-bit seed. Order matters.
inline std::uint64_t mix_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t state = base;
    std::uint64_t h = splitmix64(state);
    for (std::uint64_t part : parts) {
        state ^= part + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h ^= splitmix64(state);
    }
    return h;
}

/// xoshiro256++ with splitmix64 seeding. Fully self-contained so that
/// streams are bit-reproducible across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via the polar (Marsaglia) method.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_unit() - 1.0;
            v = 2.0 * next_unit() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    /// Uniform on [lo, hi] in magnitude with a random sign, i.e. uniform
    /// on [-hi,-lo] U [lo,hi].
    double next_signed_magnitude(double lo, double hi) {
        const double mag = lo + (hi - lo) * next_unit();
        return (next_u64() & 1ULL) ? mag : -mag;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace mrest
