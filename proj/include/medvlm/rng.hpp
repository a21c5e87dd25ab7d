#pragma once

// Seeded, splittable RNG used for every random decision in the project.
// SplitMix64 core keeps the state 64-bit and makes per-name streams cheap:
// split("encoder2d.patch_proj.weight") yields an independent stream that
// depends only on (seed, name), so adding parameters never shifts the
// initialization of existing ones. No std::*_distribution anywhere; their
// output is implementation-defined and would break byte-reproducibility.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace medvlm {

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        // SplitMix64 (Steele et al.)
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    int range_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi_inclusive - lo + 1)));
    }

    // Standard normal via Box-Muller (cos branch only; keeps the stream
    // consumption rate fixed at two draws per sample).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], avoids log(0)
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Normal resampled until |z| <= 2, then scaled; the usual init scheme.
    double truncated_normal(double std) {
        double z = normal();
        while (z < -2.0 || z > 2.0) z = normal();
        return z * std;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent stream derived from this generator's seed and a name.
    Rng split(std::string_view name) const {
        // FNV-1a over the name, folded into the current seed.
        uint64_t h = 14695981039346656037ULL;
        for (const char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        Rng child(state_ ^ h);
        child.next_u64();  // decorrelate from raw xor
        return child;
    }

private:
    uint64_t state_;
};

}  // namespace medvlm
