#pragma once

#include <cstdint>
#include <vector>

namespace fusionbench {

// Deterministic 64-bit generator (splitmix64). Identical sequences on every
// platform for a given seed, which is what the seeded-reproducibility
// contract needs; std:: distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    template <typename T>
    T next_real() {
        if constexpr (sizeof(T) == sizeof(float)) return next_float();
        else return static_cast<T>(next_double());
    }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Lemire's multiply-shift with rejection for exact uniformity.
        std::uint64_t x = next_u64();
        unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        std::uint64_t lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = -n % n;
            while (lo < t) {
                x = next_u64();
                m = static_cast<unsigned __int128>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent child stream keyed by (this stream's seed, ids...).
    // Used to give every trial/epoch/sensor its own deterministic stream.
    template <typename... Ids>
    Rng derive(Ids... ids) const {
        std::uint64_t h = state_;
        ((h = mix(h, static_cast<std::uint64_t>(ids))), ...);
        return Rng(h);
    }

private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 1 | 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace fusionbench
