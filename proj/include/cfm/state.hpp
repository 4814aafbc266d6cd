#pragma once

#include "cfm/config.hpp"
#include "cfm/data.hpp"
#include "cfm/linalg.hpp"
#include "cfm/random.hpp"

#include <array>
#include <vector>

namespace cfm {

// Latent state of one treatment arm.
//
// Cluster labels are 0-based (0 .. l_max-1). Scores and labels hold a row for
// every unit: factual rows are Gibbs-updated, counterfactual rows are redrawn
// from the predictive at each imputation.
struct ArmState {
    Matrix coef;      // q x (p+1); column 0 is the intercept mu_t, the rest is B_t
    Matrix loadings;  // q x J
    Vector psi;       // q idiosyncratic variances
    Matrix scores;    // n x J
    IntMatrix labels; // n x J
    Matrix eta;       // L x J atom locations
    Matrix tau;       // L x J atom precisions
    std::vector<Matrix> alpha;  // per factor: (L-1) x (p+1) stick coefficients
    Matrix theta;     // q x J local precisions
    Vector delta;     // J
    Vector iota;      // J, cumulative products of delta

    Index q() const { return loadings.rows(); }
    Index factors() const { return loadings.cols(); }
    Index clusters() const { return eta.rows(); }

    auto intercept() const { return coef.col(0); }
    auto regression() const { return coef.rightCols(coef.cols() - 1); }
};

inline Vector cumulative_products(const Vector& delta) {
    Vector iota(delta.size());
    double acc = 1.0;
    for (Index h = 0; h < delta.size(); ++h) iota[h] = acc *= delta[h];
    return iota;
}

inline ArmState init_arm(Index n, Index q, Index p, int factors, int clusters, Engine& eng) {
    ArmState s;
    s.coef = Matrix::Zero(q, p + 1);
    s.loadings.resize(q, factors);
    for (Index j = 0; j < q; ++j)
        for (Index h = 0; h < factors; ++h) s.loadings(j, h) = 0.5 * std_normal(eng);
    s.psi = Vector::Ones(q);
    s.scores.resize(n, factors);
    for (Index i = 0; i < n; ++i)
        for (Index h = 0; h < factors; ++h) s.scores(i, h) = std_normal(eng);
    s.labels = IntMatrix::Zero(n, factors);
    s.eta = Matrix::Zero(clusters, factors);
    s.tau = Matrix::Ones(clusters, factors);
    s.alpha.assign(factors, Matrix::Zero(clusters - 1, p + 1));
    s.theta = Matrix::Ones(q, factors);
    s.delta = Vector::Ones(factors);
    s.iota = cumulative_products(s.delta);
    return s;
}

// Initial states for both arms; each arm draws from its own substream of `seed`.
inline std::array<ArmState, 2> init_state(const Dataset& data, const ModelConfig& cfg, std::uint64_t seed) {
    std::array<ArmState, 2> arms;
    for (int t = 0; t < 2; ++t) {
        Engine eng = substream(seed, {0xC0FFEE, static_cast<std::uint64_t>(t)});
        arms[t] = init_arm(data.n(), data.q(), data.p(), cfg.j_max[t], cfg.l_max, eng);
    }
    return arms;
}

}  // namespace cfm
