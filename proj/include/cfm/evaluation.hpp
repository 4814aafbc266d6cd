#pragma once
// Replicate metrics, varimax, variance explained, loading alignment and
// chain diagnostics.

#include "cfm/data.hpp"
#include "cfm/errors.hpp"
#include "cfm/estimands.hpp"
#include "cfm/gibbs.hpp"
#include "cfm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace cfm {

struct ReplicateMetrics {
    std::string method;
    Vector bias;        // posterior mean - truth, per outcome
    Vector sq_error;
    std::vector<int> covered;
};

inline ReplicateMetrics replicate_metrics(const EffectSummary& s, const Vector& truth, std::string method) {
    if (truth.size() != s.q()) throw ValidationError("truth and summary have different outcome counts");
    ReplicateMetrics m;
    m.method = std::move(method);
    m.bias = s.mean - truth;
    m.sq_error = m.bias.array().square();
    m.covered.resize(static_cast<size_t>(truth.size()));
    for (Index k = 0; k < truth.size(); ++k)
        m.covered[static_cast<size_t>(k)] = s.lower[k] <= truth[k] && truth[k] <= s.upper[k];
    return m;
}

struct AggregateMetrics {
    Index replicates = 0;
    Vector bias;
    Vector mse;
    Vector coverage;
    Vector bias_variance;  // across replicates, 1/R normalization
};

inline AggregateMetrics aggregate_metrics(const std::vector<ReplicateMetrics>& reps) {
    if (reps.empty()) throw ValidationError("aggregate_metrics needs at least one replicate");
    const Index q = reps.front().bias.size();
    AggregateMetrics a;
    a.replicates = static_cast<Index>(reps.size());
    a.bias = Vector::Zero(q), a.mse = Vector::Zero(q), a.coverage = Vector::Zero(q), a.bias_variance = Vector::Zero(q);
    for (const auto& r : reps) {
        if (r.bias.size() != q) throw ValidationError("replicates have different outcome counts");
        a.bias += r.bias;
        a.mse += r.sq_error;
        for (Index k = 0; k < q; ++k) a.coverage[k] += r.covered[static_cast<size_t>(k)];
    }
    const double R = static_cast<double>(reps.size());
    a.bias /= R, a.mse /= R, a.coverage /= R;
    for (const auto& r : reps) a.bias_variance += (r.bias - a.bias).array().square().matrix();
    a.bias_variance /= R;
    return a;
}

// ---------------------------------------------------------------------------
// Varimax

inline double varimax_criterion(const Matrix& l) {
    const double q = static_cast<double>(l.rows());
    double c = 0.0;
    for (Index h = 0; h < l.cols(); ++h) {
        const auto sq = l.col(h).array().square();
        const double m2 = sq.sum() / q;
        c += (sq.square().sum() / q) - m2 * m2;
    }
    return c;
}

struct VarimaxResult {
    Matrix rotated;
    Matrix rotation;  // rotated = loadings * rotation
    double criterion = 0.0;
    int sweeps = 0;
};

// Pairwise (Jacobi) planar rotations, each solved in closed form.
inline VarimaxResult varimax(const Matrix& loadings, double tol = 1e-8, int max_iter = 1000, bool kaiser = false) {
    const Index q = loadings.rows();
    const Index J = loadings.cols();
    VarimaxResult r;
    r.rotation = Matrix::Identity(J, J);
    Vector norms = Vector::Ones(q);
    Matrix l = loadings;
    if (kaiser) {
        norms = l.rowwise().norm();
        for (Index j = 0; j < q; ++j)
            if (norms[j] > 0) l.row(j) /= norms[j];
    }
    double crit = varimax_criterion(l);
    const double nq = static_cast<double>(q);
    for (r.sweeps = 0; r.sweeps < max_iter && J > 1; ++r.sweeps) {
        for (Index a = 0; a < J - 1; ++a)
            for (Index b = a + 1; b < J; ++b) {
                double A = 0, B = 0, C = 0, D = 0;
                for (Index j = 0; j < q; ++j) {
                    const double x = l(j, a), y = l(j, b);
                    const double u = x * x - y * y, v = 2.0 * x * y;
                    A += u, B += v, C += u * u - v * v, D += 2.0 * u * v;
                }
                const double phi = 0.25 * std::atan2(D - 2.0 * A * B / nq, C - (A * A - B * B) / nq);
                const double c = std::cos(phi), s = std::sin(phi);
                const Vector ca = l.col(a), cb = l.col(b);
                l.col(a) = c * ca + s * cb;
                l.col(b) = -s * ca + c * cb;
                const Vector ra = r.rotation.col(a), rb = r.rotation.col(b);
                r.rotation.col(a) = c * ra + s * rb;
                r.rotation.col(b) = -s * ra + c * rb;
            }
        const double next = varimax_criterion(l);
        const double gain = next - crit;
        crit = next;
        if (gain < tol) {
            ++r.sweeps;
            break;
        }
    }
    if (kaiser)
        for (Index j = 0; j < q; ++j) l.row(j) *= norms[j];
    r.rotated = loadings * r.rotation;
    r.criterion = varimax_criterion(r.rotated);
    return r;
}

// ---------------------------------------------------------------------------

struct VarianceExplained {
    Vector share;  // per factor
    double total = 0.0;
};

inline VarianceExplained variance_explained(const Matrix& loadings, const Vector& psi) {
    const Vector col = loadings.colwise().squaredNorm().transpose();
    const double denom = col.sum() + psi.sum();
    VarianceExplained v;
    v.share = denom > 0 ? Vector(col / denom) : Vector(Vector::Zero(col.size()));
    v.total = v.share.sum();
    return v;
}

struct LoadingAlignment {
    std::vector<int> column;  // estimate column matched to each truth column
    std::vector<int> sign;
    Vector correlation;       // absolute correlation per truth column
    Matrix aligned;           // estimate columns permuted and sign-fixed, truth-shaped
};

inline double column_correlation(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
    const Vector ca = a.array() - a.mean();
    const Vector cb = b.array() - b.mean();
    const double den = ca.norm() * cb.norm();
    return den > 0 ? ca.dot(cb) / den : 0.0;
}

// Greedy maximum-|correlation| matching of estimate columns to truth columns.
inline LoadingAlignment align_loadings(const Matrix& estimate, const Matrix& truth) {
    if (estimate.rows() != truth.rows() || estimate.cols() < truth.cols())
        throw ValidationError("align_loadings needs matching rows and at least as many estimate columns");
    const Index Jt = truth.cols(), Je = estimate.cols();
    Matrix corr(Jt, Je);
    for (Index a = 0; a < Jt; ++a)
        for (Index b = 0; b < Je; ++b) corr(a, b) = column_correlation(truth.col(a), estimate.col(b));
    LoadingAlignment out;
    out.column.assign(static_cast<size_t>(Jt), -1);
    out.sign.assign(static_cast<size_t>(Jt), 1);
    out.correlation.resize(Jt);
    out.aligned.resize(truth.rows(), Jt);
    std::vector<char> t_used(static_cast<size_t>(Jt), 0), e_used(static_cast<size_t>(Je), 0);
    for (Index step = 0; step < Jt; ++step) {
        Index ba = -1, bb = -1;
        double best = -1.0;
        for (Index a = 0; a < Jt; ++a)
            for (Index b = 0; b < Je; ++b)
                if (!t_used[static_cast<size_t>(a)] && !e_used[static_cast<size_t>(b)] && std::abs(corr(a, b)) > best)
                    best = std::abs(corr(a, b)), ba = a, bb = b;
        if (ba < 0) break;
        t_used[static_cast<size_t>(ba)] = e_used[static_cast<size_t>(bb)] = 1;
        out.column[static_cast<size_t>(ba)] = static_cast<int>(bb);
        out.sign[static_cast<size_t>(ba)] = corr(ba, bb) < 0 ? -1 : 1;
        out.correlation[ba] = best;
        out.aligned.col(ba) = out.sign[static_cast<size_t>(ba)] * estimate.col(bb);
    }
    return out;
}

// Element-wise posterior mean of one arm's loadings after flipping each
// draw's columns to agree in sign with the first stored draw.
inline Matrix posterior_mean_loadings(const std::vector<ParamSnapshot>& draws, int arm) {
    if (draws.empty()) throw ValidationError("no stored loading draws");
    const Matrix& ref = draws.front().loadings[arm];
    Matrix sum = Matrix::Zero(ref.rows(), ref.cols());
    for (const auto& d : draws) {
        const Matrix& l = d.loadings[arm];
        for (Index h = 0; h < l.cols(); ++h) sum.col(h) += (l.col(h).dot(ref.col(h)) < 0 ? -1.0 : 1.0) * l.col(h);
    }
    return sum / static_cast<double>(draws.size());
}

// ---------------------------------------------------------------------------
// Diagnostics

struct EssResult {
    double ess = 0.0;
    bool zero_variance = false;
};

// Geyer initial monotone sequence estimator.
inline EssResult effective_sample_size(const std::vector<double>& x) {
    const auto m = static_cast<Index>(x.size());
    if (m < 10) throw ValidationError("effective_sample_size needs at least 10 draws");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(m);
    std::vector<double> c(x.size());
    for (Index i = 0; i < m; ++i) c[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] - mean;
    auto autocov = [&](Index lag) {
        double s = 0.0;
        for (Index i = 0; i + lag < m; ++i) s += c[static_cast<size_t>(i)] * c[static_cast<size_t>(i + lag)];
        return s / static_cast<double>(m);
    };
    const double g0 = autocov(0);
    if (!(g0 > 1e-300)) return {static_cast<double>(m), true};
    double tau = -1.0;
    double cap = std::numeric_limits<double>::infinity();
    for (Index k = 0; 2 * k + 1 < m; ++k) {
        const double pair = std::min((autocov(2 * k) + autocov(2 * k + 1)) / g0, cap);
        if (pair <= 0) break;
        cap = pair;
        tau += 2.0 * pair;
    }
    const double ess = static_cast<double>(m) / std::max(tau, 1e-12);
    return {std::min(ess, static_cast<double>(m)), false};
}

// Potential scale reduction from two chains of equal length.
inline double two_chain_ratio(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ValidationError("two_chain_ratio needs equal chains of length >= 2");
    const double n = static_cast<double>(a.size());
    auto stats = [](const std::vector<double>& v) {
        double m = 0.0, s = 0.0;
        for (double e : v) m += e;
        m /= static_cast<double>(v.size());
        for (double e : v) s += (e - m) * (e - m);
        return std::pair{m, s / static_cast<double>(v.size() - 1)};
    };
    const auto [ma, va] = stats(a);
    const auto [mb, vb] = stats(b);
    const double w = 0.5 * (va + vb);
    const double grand = 0.5 * (ma + mb);
    const double between = n * ((ma - grand) * (ma - grand) + (mb - grand) * (mb - grand));
    if (!(w > 0)) return 1.0;
    return std::sqrt(((n - 1.0) / n * w + between / n) / w);
}

// Pooled within-arm OLS residual SD of each outcome on (1, X).
inline Vector residual_sd(const Dataset& d) {
    Vector ss = Vector::Zero(d.q());
    double dof = 0.0;
    for (int t = 0; t < 2; ++t) {
        const auto units = d.arm_units(t);
        Matrix design(static_cast<Index>(units.size()), d.p() + 1);
        Matrix y(static_cast<Index>(units.size()), d.q());
        for (size_t r = 0; r < units.size(); ++r) {
            design(static_cast<Index>(r), 0) = 1.0;
            design.row(static_cast<Index>(r)).tail(d.p()) = d.x.row(units[r]);
            y.row(static_cast<Index>(r)) = d.y.row(units[r]);
        }
        const Matrix coef = design.colPivHouseholderQr().solve(y);
        ss += (y - design * coef).colwise().squaredNorm().transpose();
        dof += static_cast<double>(units.size()) - static_cast<double>(d.p() + 1);
    }
    if (!(dof > 0)) throw ValidationError("too few units for residual SD");
    return (ss / dof).cwiseSqrt();
}

}  // namespace cfm
