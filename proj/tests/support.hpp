#pragma once
// Helpers shared by the unit and acceptance suites: Monte Carlo moment
// checks and closed-form reference moments computed independently of the
// library code.

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace cfmtest {

struct SampleMoments {
    double mean = 0, var = 0, se_mean = 0, se_var = 0;
};

inline SampleMoments moments(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double m = 0;
    for (double v : x) m += v;
    m /= n;
    double m2 = 0, m4 = 0;
    for (double v : x) {
        const double d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    SampleMoments s;
    s.mean = m;
    s.var = m2 * n / (n - 1);
    s.se_mean = std::sqrt(s.var / n);
    s.se_var = std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
    return s;
}

struct MomentCheck {
    std::string name;
    double z_mean = 0, z_var = 0;
    bool ok(double limit = 3.0) const { return std::abs(z_mean) <= limit && std::abs(z_var) <= limit; }
};

inline MomentCheck check_moments(const std::string& name, const std::vector<double>& draws, double mean, double var) {
    const SampleMoments s = moments(draws);
    return {name, (s.mean - mean) / s.se_mean, (s.var - var) / s.se_var};
}

inline double phi(double x) { return boost::math::pdf(boost::math::normal(), x); }
inline double Phi(double x) { return boost::math::cdf(boost::math::normal(), x); }

// N(a, 1) restricted to (0, inf) or (-inf, 0).
inline std::pair<double, double> truncated_moments(double a, bool positive) {
    if (positive) {
        const double lam = phi(a) / Phi(a);
        return {a + lam, 1.0 - a * lam - lam * lam};
    }
    const double lam = phi(a) / Phi(-a);
    return {a - lam, 1.0 + a * lam - lam * lam};
}

// Mean and variance of g(X) for X ~ Gamma(shape, rate), by quadrature.
// `cond` returns the conditional (mean, variance) of the quantity given X.
inline std::pair<double, double> mix_over_gamma(double shape, double rate,
                                                const std::function<std::pair<double, double>(double)>& cond) {
    auto dens = [&](double x) {
        return std::exp(shape * std::log(rate) + (shape - 1) * std::log(x) - rate * x - std::lgamma(shape));
    };
    const double hi = (shape + 40.0 * std::sqrt(shape) + 40.0) / rate;
    using boost::math::quadrature::gauss_kronrod;
    const double m = gauss_kronrod<double, 61>::integrate([&](double x) { return x > 0 ? dens(x) * cond(x).first : 0.0; }, 0.0, hi, 15, 1e-12);
    const double s2 = gauss_kronrod<double, 61>::integrate(
        [&](double x) {
            if (x <= 0) return 0.0;
            const auto [cm, cv] = cond(x);
            return dens(x) * (cv + cm * cm);
        },
        0.0, hi, 15, 1e-12);
    return {m, s2 - m * m};
}

// Same for X ~ N(mean, var).
inline std::pair<double, double> mix_over_normal(double mean, double var,
                                                 const std::function<std::pair<double, double>(double)>& cond) {
    const double sd = std::sqrt(var);
    using boost::math::quadrature::gauss_kronrod;
    auto dens = [&](double x) { return phi((x - mean) / sd) / sd; };
    const double lo = mean - 12 * sd, hi = mean + 12 * sd;
    const double m = gauss_kronrod<double, 61>::integrate([&](double x) { return dens(x) * cond(x).first; }, lo, hi, 15, 1e-12);
    const double s2 = gauss_kronrod<double, 61>::integrate(
        [&](double x) {
            const auto [cm, cv] = cond(x);
            return dens(x) * (cv + cm * cm);
        },
        lo, hi, 15, 1e-12);
    return {m, s2 - m * m};
}

// Explicit 2x2 symmetric inverse.
struct Sym2 {
    double a, b, d;  // [[a, b], [b, d]]
    Sym2 inverse() const {
        const double det = a * d - b * b;
        return {d / det, -b / det, a / det};
    }
};

}  // namespace cfmtest
