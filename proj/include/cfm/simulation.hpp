#pragma once
// Synthetic data with known potential outcomes.
//
// Scenarios 1-3 vary how the unmeasured U relates to the covariates, 4 mimics
// a 27-outcome / 28-covariate application without U, 5 uses weak loadings and
// a nonlinear mean, 6 lets U act on the outcomes directly.
//
// Generation:
//   C_ih      = f_C(X)                   cluster of unit i on factor h
//   l_ith     ~ N(mu_{t,C} + gamma U_i, 1)
//   Y_i(t)    = m_t(X_i) + beta_tu U_i + Lambda_t l_it + xi_it,  xi ~ Unif[0,1]^q
//
// with m_t(X) = B_t X (or the nonlinear g_t in Scenario 5).

#include "cfm/data.hpp"
#include "cfm/errors.hpp"
#include "cfm/linalg.hpp"
#include "cfm/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace cfm {

enum class ULink { independent, depends_on_x, causes_x, none, direct };
enum class LoadingRegime { strong, weak };

inline const char* ulink_name(ULink u) {
    switch (u) {
        case ULink::independent: return "independent";
        case ULink::depends_on_x: return "U|X";
        case ULink::causes_x: return "X|U";
        case ULink::none: return "none";
        case ULink::direct: return "direct-on-Y";
    }
    return "?";
}

struct ScenarioSpec {
    int id = 1;
    Index n = 500;
    Index q = 10;
    Index p = 4;
    std::array<int, 2> j{3, 3};
    std::vector<int> clusters;  // per factor, 2 or 3; empty means alternate 3, 2, 3, ...
    ULink u_link = ULink::independent;
    bool nonlinear = false;
    LoadingRegime regime = LoadingRegime::strong;
    double gamma = 0.8;  // score loading on U
    std::uint64_t seed = 1;

    int clusters_for(int h) const {
        if (!clusters.empty()) return clusters.at(static_cast<size_t>(h));
        return h % 2 == 0 ? 3 : 2;
    }

    // Table-level sizes for each scenario.
    static ScenarioSpec paper(int id, std::uint64_t seed = 1) {
        if (id < 1 || id > 6) throw ValidationError("scenario must be in 1..6");
        ScenarioSpec s;
        s.id = id;
        s.seed = seed;
        switch (id) {
            case 2: s.u_link = ULink::depends_on_x; break;
            case 3: s.u_link = ULink::causes_x; break;
            case 4:
                s.n = 3426, s.q = 27, s.p = 28;
                s.u_link = ULink::none;
                s.gamma = 0.0;
                break;
            case 5:
                s.nonlinear = true;
                s.regime = LoadingRegime::weak;
                break;
            case 6: s.u_link = ULink::direct; break;
            default: break;
        }
        return s;
    }

    // Reduced sizes used by the replicate runs.
    static ScenarioSpec desk(int id, std::uint64_t seed = 1) {
        ScenarioSpec s = paper(id, seed);
        if (id == 4) {
            s.n = 1000;
        } else {
            s.n = 300, s.q = 6, s.j = {2, 2};
        }
        return s;
    }

    void validate() const {
        if (id < 1 || id > 6) throw ValidationError("scenario must be in 1..6");
        if (n < 10 || q < 1 || j[0] < 1 || j[1] < 1) throw ValidationError("scenario dimensions must be positive");
        if (p < 4) throw ValidationError("scenarios need at least four covariates");
        for (int t = 0; t < 2; ++t)
            for (int h = 0; h < j[t]; ++h)
                if (clusters_for(h) != 2 && clusters_for(h) != 3) throw ValidationError("clusters per factor must be 2 or 3");
    }
};

struct SimulatedTruth {
    ScenarioSpec spec;
    Dataset data;
    std::array<Matrix, 2> potential;  // Y(0), Y(1), n x q
    Vector sate;
    std::array<Matrix, 2> loadings;   // q x J_t
    std::array<Matrix, 2> scores;     // n x J_t
    std::array<Matrix, 2> mean_coef;  // q x p (linear) or q x 7 (nonlinear)
    std::array<Vector, 2> beta_u;     // q, zero unless U acts on Y
    IntMatrix clusters;               // n x max(J), 0-based
    Vector u;
    Vector propensity;
};

// Scenario 5 mean: b0 + b1 e^x1 + b2 x2^2 + b3 x3 + b4 x4 + b5 [x3=1,x4=1] + b6 [x3=0,x4=0].
inline double nonlinear_mean(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    const bool both = x[2] == 1.0 && x[3] == 1.0;
    const bool neither = x[2] == 0.0 && x[3] == 0.0;
    return b[0] + b[1] * std::exp(x[0]) + b[2] * x[1] * x[1] + b[3] * x[2] + b[4] * x[3] + b[5] * both + b[6] * neither;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Cluster means per arm. Arm 1 uses a cyclic shift of arm 0 so that the
// score surface differs between arms.
inline double cluster_mean(int arm, int clusters, int c) {
    static constexpr std::array<double, 3> three{-2.0, 0.0, 2.0};
    static constexpr std::array<double, 2> two{-1.5, 1.5};
    if (clusters == 3) return three[static_cast<size_t>((c + arm) % 3)];
    return two[static_cast<size_t>((c + arm) % 2)];
}

// 27 x 3 block loadings: outcomes 1-9, 10-18, 19-27 load on factors 1, 2, 3.
inline Matrix block_loadings_fixture(int arm) {
    Matrix l = Matrix::Zero(27, 3);
    for (int j = 0; j < 27; ++j) {
        const int block = j / 9;
        const int pos = j % 9;
        l(j, block) = (0.95 - 0.05 * pos) * (arm == 0 ? 1.0 : 0.9);
        if (pos % 3 == 0) l(j, (block + 1) % 3) = 0.15;
    }
    return l;
}

namespace detail {

inline double sample_quantile(std::vector<double> v, double prob) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Matrix sparse_loadings(Index q, int factors, LoadingRegime regime, Engine& eng) {
    const double lo = regime == LoadingRegime::strong ? 0.8 : 0.05;
    const double hi = regime == LoadingRegime::strong ? 1.0 : 0.15;
    Matrix l(q, factors);
    for (Index j = 0; j < q; ++j)
        for (int h = 0; h < factors; ++h) {
            const double mag = lo + (hi - lo) * uniform01(eng);
            l(j, h) = uniform01(eng) < 0.5 ? -mag : mag;
        }
    // Exactly a quarter of the entries (rounded) are zeroed.
    const Index total = q * factors;
    const auto zeros = static_cast<Index>(std::lround(0.25 * static_cast<double>(total)));
    std::vector<Index> idx(static_cast<size_t>(total));
    for (Index k = 0; k < total; ++k) idx[static_cast<size_t>(k)] = k;
    for (Index k = 0; k < zeros; ++k) {
        const Index pick = k + static_cast<Index>(uniform01(eng) * static_cast<double>(total - k));
        std::swap(idx[static_cast<size_t>(k)], idx[static_cast<size_t>(std::min(pick, total - 1))]);
        const Index e = idx[static_cast<size_t>(k)];
        l(e / factors, e % factors) = 0.0;
    }
    return l;
}

}  // namespace detail

inline SimulatedTruth generate(const ScenarioSpec& spec) {
    spec.validate();
    Engine eng = substream(spec.seed, {0x5CE7A210, static_cast<std::uint64_t>(spec.id)});
    const Index n = spec.n, q = spec.q, p = spec.p;
    SimulatedTruth out;
    out.spec = spec;

    // Unmeasured variable and covariates.
    out.u = Vector::Zero(n);
    Matrix x(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < p; ++k) x(i, k) = std_normal(eng);
        x(i, 2) = uniform01(eng) < 0.5 ? 1.0 : 0.0;
        x(i, 3) = uniform01(eng) < 0.5 ? 1.0 : 0.0;
    }
    const double sqrt2 = std::sqrt(2.0);
    for (Index i = 0; i < n; ++i) {
        switch (spec.u_link) {
            case ULink::independent:
            case ULink::direct: out.u[i] = sqrt2 * std_normal(eng); break;
            case ULink::depends_on_x: {
                const double f = 0.5 * (x(i, 0) + x(i, 1) - x(i, 2) + x(i, 3));
                out.u[i] = f + std::sqrt(0.5) * std_normal(eng);
                break;
            }
            case ULink::causes_x:
                out.u[i] = sqrt2 * std_normal(eng);
                x(i, 0) += 0.7 * out.u[i];
                x(i, 1) += 0.7 * out.u[i];
                break;
            case ULink::none: break;
        }
    }

    // Treatment.
    out.propensity.resize(n);
    std::vector<int> t(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const double idx = 0.3 * (x(i, 0) - x(i, 1) + x(i, 2) - x(i, 3) + 0.5 * out.u[i]);
        out.propensity[i] = std::clamp(logistic(idx), 0.02, 0.98);
        t[static_cast<size_t>(i)] = uniform01(eng) < out.propensity[i] ? 1 : 0;
    }

    // Clusters from covariate thresholds: tertiles of X1 or the median of X2.
    std::vector<double> x1(x.col(0).data(), x.col(0).data() + n), x2(x.col(1).data(), x.col(1).data() + n);
    const double t1 = detail::sample_quantile(x1, 1.0 / 3.0), t2 = detail::sample_quantile(x1, 2.0 / 3.0);
    const double med = detail::sample_quantile(x2, 0.5);
    const int jmax = std::max(spec.j[0], spec.j[1]);
    out.clusters.resize(n, jmax);
    for (Index i = 0; i < n; ++i)
        for (int h = 0; h < jmax; ++h)
            out.clusters(i, h) = spec.clusters_for(h) == 3 ? (x(i, 0) <= t1 ? 0 : (x(i, 0) <= t2 ? 1 : 2))
                                                           : (x(i, 1) <= med ? 0 : 1);

    const Index ncoef = spec.nonlinear ? 7 : p;
    for (int arm = 0; arm < 2; ++arm) {
        const int J = spec.j[arm];
        out.loadings[arm] = spec.id == 4 && q == 27 && J == 3 ? block_loadings_fixture(arm)
                                                              : detail::sparse_loadings(q, J, spec.regime, eng);
        out.mean_coef[arm].resize(q, ncoef);
        for (Index k = 0; k < q; ++k)
            for (Index c = 0; c < ncoef; ++c) out.mean_coef[arm](k, c) = -3.0 + arm + 5.0 * uniform01(eng);
        out.beta_u[arm] = Vector::Zero(q);
        if (spec.u_link == ULink::direct)
            for (Index k = 0; k < q; ++k) out.beta_u[arm][k] = 0.5 + uniform01(eng);
        out.scores[arm].resize(n, J);
        for (Index i = 0; i < n; ++i)
            for (int h = 0; h < J; ++h)
                out.scores[arm](i, h) = cluster_mean(arm, spec.clusters_for(h), out.clusters(i, h)) +
                                        spec.gamma * out.u[i] + std_normal(eng);
    }

    for (int arm = 0; arm < 2; ++arm) {
        Matrix& y = out.potential[arm];
        y.resize(n, q);
        for (Index i = 0; i < n; ++i) {
            for (Index k = 0; k < q; ++k) {
                const double m = spec.nonlinear ? nonlinear_mean(x.row(i), out.mean_coef[arm].row(k))
                                                : out.mean_coef[arm].row(k).dot(x.row(i));
                y(i, k) = m + out.beta_u[arm][k] * out.u[i] + uniform01(eng);
            }
            y.row(i) += (out.loadings[arm] * out.scores[arm].row(i).transpose()).transpose();
        }
    }
    out.sate = (out.potential[1] - out.potential[0]).colwise().mean().transpose();

    Matrix observed(n, q);
    for (Index i = 0; i < n; ++i) observed.row(i) = out.potential[t[static_cast<size_t>(i)]].row(i);
    out.data = make_dataset(std::move(observed), std::move(t), x);
    return out;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<size_t>(m.cols()));
        for (Index k = 0; k < m.cols(); ++k) r[static_cast<size_t>(k)] = m(i, k);
        rows.push_back(r);
    }
    return rows;
}

inline nlohmann::json truth_to_json(const SimulatedTruth& s) {
    std::vector<double> sate(s.sate.data(), s.sate.data() + s.sate.size());
    nlohmann::json j{
        {"scenario", s.spec.id},
        {"n", s.spec.n},
        {"q", s.spec.q},
        {"p", s.spec.p},
        {"j", s.spec.j},
        {"seed", s.spec.seed},
        {"u_link", ulink_name(s.spec.u_link)},
        {"nonlinear", s.spec.nonlinear},
        {"loading_regime", s.spec.regime == LoadingRegime::strong ? "strong" : "weak"},
        {"gamma", s.spec.gamma},
        {"sate", sate},
        {"outcome_names", s.data.outcome_names},
        {"loadings", {matrix_to_json(s.loadings[0]), matrix_to_json(s.loadings[1])}},
        {"functions",
         {{"f_U", "0.5*(x1 + x2 - x3 + x4)"},
          {"f_k", "0.7*u"},
          {"f_T", "clip(logistic(0.3*(x1 - x2 + x3 - x4 + 0.5*u)), 0.02, 0.98)"},
          {"f_C", "3 clusters: tertiles of x1; 2 clusters: median of x2"},
          {"mu_tc", "arm 0: (-2, 0, 2) / (-1.5, 1.5); arm 1: cyclic shift by one"}}},
    };
    return j;
}

}  // namespace cfm
