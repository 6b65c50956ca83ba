#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace gasketlab {

// Counter-based generator: every draw is a pure function of
// (seed, tag, replicate, stream, counter), so parallel schedules cannot
// change results. Mixing is splitmix64 applied to a keyed counter.
class Rng {
public:
    Rng() : key_(0), counter_(0) {}

    Rng(std::uint64_t seed, std::string_view tag, std::uint64_t replicate = 0,
        std::uint64_t stream = 0)
        : key_(mix_key(seed, tag, replicate, stream)), counter_(0) {}

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0,1); never returns 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double exponential() { return -std::log(uniform()); }

    // Index uniform in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // 128-bit multiply rejection-free scaling; bias < 2^-64, irrelevant here.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Exact Poisson by counting unit-exponential arrivals. O(mean).
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        std::uint64_t n = 0;
        double acc = exponential();
        while (acc < mean) {
            ++n;
            acc += exponential();
        }
        return n;
    }

    double normal() {
        // Box-Muller, one value per call.
        double u = uniform(), v = uniform();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586477 * v);
    }

private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    static std::uint64_t mix_key(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t replicate, std::uint64_t stream) {
        auto scramble = [](std::uint64_t z) {
            z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
            z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
            return z ^ (z >> 33);
        };
        std::uint64_t k = scramble(seed ^ 0x6A09E667F3BCC908ULL);
        k = scramble(k ^ fnv1a(tag));
        k = scramble(k ^ (replicate * 0xD1342543DE82EF95ULL + 1));
        k = scramble(k ^ (stream * 0xAF251AF3B0F025B5ULL + 2));
        return k;
    }

    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace gasketlab
