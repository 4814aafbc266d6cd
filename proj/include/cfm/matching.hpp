#pragma once
// Logistic propensity model and greedy 1-to-1 nearest-neighbour matching
// without replacement.

#include "cfm/data.hpp"
#include "cfm/errors.hpp"
#include "cfm/linalg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace cfm {

struct PropensityFit {
    Vector coef;  // intercept first
    Vector prob;
    int iterations = 0;
    bool converged = false;
    double ridge = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

inline PropensityFit irls_logistic(const Matrix& design, const Vector& y, double ridge, int max_iter, double tol) {
    const Index d = design.cols();
    PropensityFit fit;
    fit.ridge = ridge;
    fit.coef = Vector::Zero(d);
    Vector p(design.rows());
    for (fit.iterations = 0; fit.iterations < max_iter; ++fit.iterations) {
        const Vector eta = design * fit.coef;
        for (Index i = 0; i < eta.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-eta[i]));
        const Vector grad = design.transpose() * (y - p) - ridge * fit.coef;
        if (!grad.allFinite()) break;
        if (grad.norm() < tol) {
            fit.converged = true;
            break;
        }
        const Vector w = (p.array() * (1.0 - p.array())).matrix();
        Matrix hess = design.transpose() * w.asDiagonal() * design;
        hess.diagonal().array() += ridge;
        Eigen::LDLT<Matrix> ldlt(hess);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
        const Vector step = ldlt.solve(grad);
        if (!step.allFinite()) break;
        fit.coef += step;
    }
    const Vector eta = design * fit.coef;
    fit.prob.resize(eta.size());
    for (Index i = 0; i < eta.size(); ++i) fit.prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
    return fit;
}

}  // namespace detail

// Logistic regression of T on (1, X) by Newton-IRLS. Falls back to a small
// ridge penalty when the unpenalized fit diverges or separates the arms.
inline PropensityFit fit_propensity_model(const Dataset& d, int max_iter = 100, double tol = 1e-8) {
    if (d.arm_units(0).empty() || d.arm_units(1).empty()) throw ValidationError("propensity model needs both arms");
    Matrix design(d.n(), d.p() + 1);
    design.col(0).setOnes();
    design.rightCols(d.p()) = d.x;
    Vector y(d.n());
    for (Index i = 0; i < d.n(); ++i) y[i] = d.t[static_cast<size_t>(i)];

    PropensityFit fit = detail::irls_logistic(design, y, 0.0, max_iter, tol);
    const double max_eta = (design * fit.coef).cwiseAbs().maxCoeff();
    if (!fit.converged || !fit.coef.allFinite() || !(max_eta < 25.0)) {
        fit = detail::irls_logistic(design, y, 1e-4, max_iter, tol);
        fit.warnings.push_back("logistic fit separated or did not converge; refitted with ridge penalty 1e-4");
    }
    constexpr double eps = 1e-12;
    for (Index i = 0; i < fit.prob.size(); ++i) fit.prob[i] = std::clamp(fit.prob[i], eps, 1.0 - eps);
    return fit;
}

inline Vector fit_propensity(const Dataset& d) { return fit_propensity_model(d).prob; }

struct MatchedPair {
    int treated;
    int control;
    double distance;
};

struct MatchResult {
    std::vector<MatchedPair> pairs;
    std::vector<int> dropped;  // focal units left unmatched
    std::vector<std::string> notices;
    std::optional<double> caliper;
    int focal_arm = 1;  // arm whose units each receive a partner

    // Row indices of the matched sample: treated then control, pair by pair.
    std::vector<int> rows() const {
        std::vector<int> r;
        r.reserve(2 * pairs.size());
        for (const auto& p : pairs) {
            r.push_back(p.treated);
            r.push_back(p.control);
        }
        return r;
    }
};

// Greedy 1-to-1 nearest-neighbour matching without replacement on the
// propensity scale. Units of the smaller arm (treated on ties) are matched in
// descending order of their probability of being in that arm; partner ties go
// to the lower index.
inline MatchResult match_1to1(const Vector& prop, const std::vector<int>& t, std::optional<double> caliper = {}) {
    if (prop.size() != static_cast<Index>(t.size())) throw ValidationError("propensity and treatment lengths differ");
    std::vector<int> arm[2];
    for (int i = 0; i < static_cast<int>(t.size()); ++i) arm[t[static_cast<size_t>(i)] == 1 ? 1 : 0].push_back(i);
    if (arm[0].empty() || arm[1].empty()) throw ValidationError("matching needs both arms");
    MatchResult res;
    res.caliper = caliper;
    res.focal_arm = arm[0].size() < arm[1].size() ? 0 : 1;
    if (res.focal_arm == 0) res.notices.push_back("fewer controls than treated units; matching each control to a treated unit");
    std::vector<int> focal = arm[res.focal_arm];
    const std::vector<int>& pool = arm[1 - res.focal_arm];
    auto score = [&](int i) { return res.focal_arm == 1 ? prop[i] : 1.0 - prop[i]; };
    std::stable_sort(focal.begin(), focal.end(), [&](int a, int b) { return score(a) > score(b); });
    std::vector<char> used(pool.size(), 0);
    for (int i : focal) {
        size_t best = pool.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < pool.size(); ++c) {
            if (used[c]) continue;
            const double dist = std::abs(prop[i] - prop[pool[c]]);
            if (dist < best_d) best_d = dist, best = c;
        }
        if (best == pool.size()) {
            res.dropped.push_back(i);
            res.notices.push_back("no partner left for unit " + std::to_string(i));
            continue;
        }
        if (caliper && best_d > *caliper) {
            res.dropped.push_back(i);
            res.notices.push_back("unit " + std::to_string(i) + " has no partner within the caliper");
            continue;
        }
        used[best] = 1;
        const int other = pool[best];
        res.pairs.push_back(res.focal_arm == 1 ? MatchedPair{i, other, best_d} : MatchedPair{other, i, best_d});
    }
    return res;
}

// Standardized mean difference per covariate: (mean_1 - mean_0) / sqrt((var_1 + var_0) / 2).
inline Vector standardized_mean_differences(const Matrix& x, const std::vector<int>& t, const std::vector<int>& rows) {
    Vector out(x.cols());
    for (Index k = 0; k < x.cols(); ++k) {
        double s[2] = {0, 0}, ss[2] = {0, 0};
        double n[2] = {0, 0};
        for (int i : rows) {
            const int a = t[static_cast<size_t>(i)];
            s[a] += x(i, k);
            ss[a] += x(i, k) * x(i, k);
            n[a] += 1;
        }
        double m[2], v[2];
        for (int a = 0; a < 2; ++a) {
            m[a] = n[a] > 0 ? s[a] / n[a] : 0.0;
            v[a] = n[a] > 1 ? (ss[a] - n[a] * m[a] * m[a]) / (n[a] - 1) : 0.0;
        }
        const double pooled = std::sqrt(0.5 * (v[0] + v[1]));
        out[k] = pooled > 0 ? (m[1] - m[0]) / pooled : 0.0;
    }
    return out;
}

struct MatchedStudy {
    PropensityFit propensity;
    MatchResult match;
    Dataset matched;
    Vector smd_before;
    Vector smd_after;
};

inline MatchedStudy match_study(const Dataset& d, std::optional<double> caliper = {}) {
    MatchedStudy s;
    s.propensity = fit_propensity_model(d);
    s.match = match_1to1(s.propensity.prob, d.t, caliper);
    std::vector<int> all(static_cast<size_t>(d.n()));
    std::iota(all.begin(), all.end(), 0);
    s.smd_before = standardized_mean_differences(d.x, d.t, all);
    const auto rows = s.match.rows();
    s.smd_after = standardized_mean_differences(d.x, d.t, rows);
    s.matched = subset_units(d, rows);
    return s;
}

inline nlohmann::json balance_to_json(const MatchedStudy& s, const Dataset& d) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : s.match.pairs)
        pairs.push_back({{"treated", d.ids[static_cast<size_t>(p.treated)]},
                         {"control", d.ids[static_cast<size_t>(p.control)]},
                         {"distance", p.distance}});
    nlohmann::json dropped = nlohmann::json::array();
    for (int i : s.match.dropped) dropped.push_back(d.ids[static_cast<size_t>(i)]);
    nlohmann::json before, after;
    for (Index k = 0; k < d.p(); ++k) {
        before[d.covariate_names[static_cast<size_t>(k)]] = s.smd_before[k];
        after[d.covariate_names[static_cast<size_t>(k)]] = s.smd_after[k];
    }
    nlohmann::json j{{"pairs", pairs},
                     {"dropped", dropped},
                     {"smd_before", before},
                     {"smd_after", after},
                     {"mean_abs_smd_before", s.smd_before.cwiseAbs().mean()},
                     {"mean_abs_smd_after", s.smd_after.cwiseAbs().mean()},
                     {"focal_arm", s.match.focal_arm},
                     {"propensity_iterations", s.propensity.iterations},
                     {"ridge", s.propensity.ridge}};
    j["caliper"] = s.match.caliper ? nlohmann::json(*s.match.caliper) : nlohmann::json(nullptr);
    return j;
}

}  // namespace cfm
