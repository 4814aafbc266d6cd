#pragma once
// Posterior summaries of the SATE draws.

#include "cfm/errors.hpp"
#include "cfm/linalg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace cfm {

struct EffectSummary {
    double level = 0.90;
    Index draws = 0;
    std::vector<std::string> names;
    Vector mean, median, lower, upper, sd;

    Index q() const { return mean.size(); }
};

// Type-7 quantile of an ascending-sorted sample.
inline double quantile_sorted(const std::vector<double>& v, double prob) {
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline EffectSummary summarize_sate(const Matrix& draws, double level, std::vector<std::string> names = {}) {
    if (draws.rows() < 2) throw ValidationError("summarize_sate needs at least two draws");
    if (!(level > 0 && level < 1)) throw ValidationError("credible level must lie in (0, 1)");
    const Index q = draws.cols();
    if (names.empty())
        for (Index k = 0; k < q; ++k) names.push_back("y_" + std::to_string(k + 1));
    if (static_cast<Index>(names.size()) != q) throw ValidationError("outcome name count does not match draws");
    EffectSummary s;
    s.level = level;
    s.draws = draws.rows();
    s.names = std::move(names);
    s.mean.resize(q), s.median.resize(q), s.lower.resize(q), s.upper.resize(q), s.sd.resize(q);
    const double tail = 0.5 * (1.0 - level);
    std::vector<double> col(static_cast<size_t>(draws.rows()));
    for (Index k = 0; k < q; ++k) {
        for (Index i = 0; i < draws.rows(); ++i) col[static_cast<size_t>(i)] = draws(i, k);
        std::sort(col.begin(), col.end());
        const double m = draws.col(k).mean();
        s.mean[k] = m;
        s.sd[k] = std::sqrt((draws.col(k).array() - m).square().sum() / static_cast<double>(draws.rows() - 1));
        s.median[k] = quantile_sorted(col, 0.5);
        s.lower[k] = quantile_sorted(col, tail);
        s.upper[k] = quantile_sorted(col, 1.0 - tail);
    }
    return s;
}

// +1 when the interval lies above zero, -1 below, 0 when it straddles zero.
inline std::vector<int> significance_flags(const EffectSummary& s) {
    std::vector<int> out(static_cast<size_t>(s.q()));
    for (Index k = 0; k < s.q(); ++k) out[static_cast<size_t>(k)] = s.lower[k] > 0 ? 1 : (s.upper[k] < 0 ? -1 : 0);
    return out;
}

inline nlohmann::json summary_to_json(const EffectSummary& s) {
    const auto sig = significance_flags(s);
    nlohmann::json outcomes = nlohmann::json::array();
    for (Index k = 0; k < s.q(); ++k)
        outcomes.push_back({{"name", s.names[static_cast<size_t>(k)]},
                            {"mean", s.mean[k]},
                            {"median", s.median[k]},
                            {"lo", s.lower[k]},
                            {"hi", s.upper[k]},
                            {"sd", s.sd[k]},
                            {"sig", sig[static_cast<size_t>(k)]}});
    return {{"outcomes", outcomes}, {"level", s.level}, {"m", s.draws}};
}

inline EffectSummary summary_from_json(const nlohmann::json& j) {
    try {
        EffectSummary s;
        s.level = j.at("level").get<double>();
        s.draws = j.at("m").get<Index>();
        const auto& o = j.at("outcomes");
        const auto q = static_cast<Index>(o.size());
        s.mean.resize(q), s.median.resize(q), s.lower.resize(q), s.upper.resize(q), s.sd.resize(q);
        for (Index k = 0; k < q; ++k) {
            const auto& e = o.at(static_cast<size_t>(k));
            s.names.push_back(e.at("name").get<std::string>());
            s.mean[k] = e.at("mean").get<double>();
            s.median[k] = e.at("median").get<double>();
            s.lower[k] = e.at("lo").get<double>();
            s.upper[k] = e.at("hi").get<double>();
            s.sd[k] = e.at("sd").get<double>();
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed summary: ") + e.what());
    }
}

}  // namespace cfm
