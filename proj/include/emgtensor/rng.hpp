// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace emg {

/// Deterministic pseudo-random stream with a documented draw order.
///
/// A stream is identified by (seed, name). Distinct names yield decorrelated
/// streams, so paired runs that must consume identical randomness (e.g. the
/// standard and tensorized samplers) can share streams by name:
///   "proposal"   - proposal draws of the Metropolis-Hastings chain
///   "acceptance" - the uniform acceptance draws
///   "noise"      - measurement-noise draws
/// All conversions from raw 64-bit output to doubles are implemented here so
/// the produced sequences do not depend on the standard library's
/// distribution internals.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view name)
        : state_(splitmix(seed ^ fnv1a(name))) {
        // warm up past the (possibly low-entropy) seed
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        // xorshift* generator; period 2^64-1, passes BigCrush for our needs
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545F4914F6CDD1DULL;
    }

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in {0, 1, ..., n-1}; n >= 1.
    std::uint64_t uniform_below(std::uint64_t n) {
        const auto i = static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    /// Standard normal via Box-Muller; consumes two uniform draws per pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return (x ^ (x >> 31)) | 1ULL; // xorshift state must be nonzero
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (const char c : s) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001B3ULL;
        }
        return h;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace emg
