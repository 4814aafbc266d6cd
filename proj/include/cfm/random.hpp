#pragma once
// Random streams and the scalar samplers used by every Gibbs block.
//
// All variates are produced by Boost.Random distributions on top of
// std::mt19937_64, both of which are fully specified algorithms, so a seed
// reproduces the same chain on any conforming platform.

#include <boost/math/special_functions/erf.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <span>

namespace cfm {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Order-sensitive hash of a path of integers below a master seed.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t v : path) h = splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
    return h;
}

inline Engine substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    return Engine(derive_seed(seed, path));
}

// Uniform on the open interval (0, 1).
inline double uniform01(Engine& eng) {
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double std_normal(Engine& eng) {
    return boost::random::normal_distribution<double>(0.0, 1.0)(eng);
}

inline double normal(Engine& eng, double mean, double sd) { return mean + sd * std_normal(eng); }

// Gamma with shape/rate parameterization (mean shape / rate).
inline double gamma_rate(Engine& eng, double shape, double rate) {
    return boost::random::gamma_distribution<double>(shape, 1.0 / rate)(eng);
}

// Inverse-gamma with shape/scale (mean scale / (shape - 1)).
inline double inv_gamma(Engine& eng, double shape, double scale) { return 1.0 / gamma_rate(eng, shape, scale); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double norm_quantile(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

// Standard normal restricted to (lower, +inf).
//
// Inverse-CDF on the upper tail for moderate bounds; beyond 5 the optimal
// translated-exponential proposal of Robert (1995).
inline double std_normal_above(Engine& eng, double lower) {
    if (lower > 5.0) {
        const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
        for (;;) {
            const double z = lower - std::log(uniform01(eng)) / rate;
            const double d = z - rate;
            if (uniform01(eng) <= std::exp(-0.5 * d * d)) return z;
        }
    }
    const double tail = norm_cdf(-lower);
    const double x = -norm_quantile(uniform01(eng) * tail);
    // Rounding in the quantile can land a hair below the bound.
    return x > lower ? x : std::nextafter(lower, std::numeric_limits<double>::infinity());
}

// N(mean, 1) conditioned on the sign of the draw.
inline double truncated_unit_normal(Engine& eng, double mean, bool positive) {
    if (positive) {
        const double v = mean + std_normal_above(eng, -mean);
        return v > 0.0 ? v : std::numeric_limits<double>::min();
    }
    const double v = mean - std_normal_above(eng, mean);
    return v < 0.0 ? v : -std::numeric_limits<double>::min();
}

// Index drawn proportionally to nonnegative weights; one uniform per call.
inline int categorical(Engine& eng, std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = uniform01(eng) * total;
    double acc = 0.0;
    const int last = static_cast<int>(weights.size()) - 1;
    for (int k = 0; k < last; ++k) {
        acc += weights[k];
        if (u < acc) return k;
    }
    // Skip trailing zero-weight entries that rounding could otherwise select.
    int k = last;
    while (k > 0 && weights[k] <= 0.0) --k;
    return k;
}

}  // namespace cfm
