#pragma once
// Covariate-dependent probit stick-breaking mixture prior on factor scores.
//
// For one (arm, factor) pair the prior is a finite mixture with L atoms
// N(eta_r, 1/tau_r). Stick r < L breaks with probability Phi(alpha_r . x~),
// x~ = (1, x); the last stick takes the residual mass. Sticks are updated via
// the probit augmentation Z_r ~ N(alpha_r . x~, 1): positive at the chosen
// stick, negative at every stick passed before it.

#include "cfm/errors.hpp"
#include "cfm/linalg.hpp"
#include "cfm/random.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace cfm {

using IntVector = Eigen::VectorXi;

struct AtomPrior {
    double mu_eta = 0.0;
    double sigma2_eta = 1.0;
    double gamma1 = 1.0;
    double gamma2 = 1.0;
    bool fixed_tau = true;
};

struct MixtureAtoms {
    Vector eta;
    Vector tau;
};

struct ScoreDraw {
    int label;
    double score;
};

namespace detail {

// Writes n_pred + 1 weights into `out`.
template <class Pred>
inline void fill_stick_weights(const Pred& predictors, Index n_pred, double* out) {
    double remaining = 1.0;
    for (Index r = 0; r < n_pred; ++r) {
        const double a = predictors(r);
        out[r] = remaining * norm_cdf(a);
        remaining *= norm_cdf(-a);
    }
    out[n_pred] = remaining;
}

}  // namespace detail

// Mixture weights from the L-1 stick linear predictors.
inline Vector stick_weights(const Eigen::Ref<const Vector>& predictors) {
    Vector w(predictors.size() + 1);
    detail::fill_stick_weights(predictors, predictors.size(), w.data());
    return w;
}

inline Vector stick_weights(const Eigen::Ref<const Eigen::RowVectorXd>& design_row, const Matrix& alpha) {
    const Vector pred = alpha * design_row.transpose();
    return stick_weights(pred);
}

// Samples labels from P(S = l) proportional to pi_l(x) N(score; eta_l, 1/tau_l).
inline IntVector allocate_clusters(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const Matrix>& design,
                                   const Matrix& alpha, const Vector& eta, const Vector& tau, Engine& eng,
                                   long factor = -1) {
    const Index m = scores.size();
    const Index L = eta.size();
    const Matrix pred = design * alpha.transpose();
    IntVector labels(m);
    std::vector<double> w(L), logp(L);
    Vector half_log_tau = 0.5 * tau.array().log();
    for (Index i = 0; i < m; ++i) {
        detail::fill_stick_weights(pred.row(i), L - 1, w.data());
        double top = -std::numeric_limits<double>::infinity();
        for (Index l = 0; l < L; ++l) {
            const double d = scores[i] - eta[l];
            logp[l] = std::log(w[l]) + half_log_tau[l] - 0.5 * tau[l] * d * d;
            if (logp[l] > top) top = logp[l];
        }
        if (!std::isfinite(top)) throw DegenerateAllocation(static_cast<long>(i), factor);
        for (Index l = 0; l < L; ++l) w[l] = std::exp(logp[l] - top);
        labels[i] = categorical(eng, w);
    }
    return labels;
}

// Conjugate update of the atoms given allocated scores; empty clusters draw from the prior.
inline MixtureAtoms update_atoms(const Eigen::Ref<const Vector>& scores, const IntVector& labels, Index clusters,
                                 const Vector& tau_current, const AtomPrior& prior, Engine& eng) {
    Vector count = Vector::Zero(clusters), sum = Vector::Zero(clusters);
    for (Index i = 0; i < scores.size(); ++i) {
        count[labels[i]] += 1.0;
        sum[labels[i]] += scores[i];
    }
    MixtureAtoms out{Vector(clusters), tau_current};
    for (Index l = 0; l < clusters; ++l) {
        const double prec = count[l] * out.tau[l] + 1.0 / prior.sigma2_eta;
        const double mean = (out.tau[l] * sum[l] + prior.mu_eta / prior.sigma2_eta) / prec;
        out.eta[l] = mean + std_normal(eng) / std::sqrt(prec);
    }
    if (!prior.fixed_tau) {
        Vector ss = Vector::Zero(clusters);
        for (Index i = 0; i < scores.size(); ++i) {
            const double d = scores[i] - out.eta[labels[i]];
            ss[labels[i]] += d * d;
        }
        for (Index l = 0; l < clusters; ++l)
            out.tau[l] = gamma_rate(eng, prior.gamma1 + 0.5 * count[l], prior.gamma2 + 0.5 * ss[l]);
    }
    return out;
}

// Latent probit variables, m x (L-1). Entry (i, r) is defined for r <= label_i
// and holds NaN otherwise.
inline Matrix augment_probit(const IntVector& labels, const Eigen::Ref<const Matrix>& design, const Matrix& alpha,
                             Engine& eng) {
    const Index m = labels.size();
    const Index sticks = alpha.rows();
    Matrix z = Matrix::Constant(m, sticks, std::numeric_limits<double>::quiet_NaN());
    if (sticks == 0) return z;
    const Matrix pred = design * alpha.transpose();
    for (Index i = 0; i < m; ++i) {
        const Index last = std::min<Index>(labels[i], sticks - 1);
        for (Index r = 0; r <= last; ++r) z(i, r) = truncated_unit_normal(eng, pred(i, r), r == labels[i]);
    }
    return z;
}

// Gaussian update of each stick's coefficients from the units that reached it (label >= r).
inline Matrix update_stick_coefficients(const Matrix& z, const IntVector& labels, const Eigen::Ref<const Matrix>& design,
                                        double mu_alpha, double sigma2_alpha, Engine& eng) {
    const Index sticks = z.cols();
    const Index dim = design.cols();
    Matrix alpha(sticks, dim);
    if (sticks == 0) return alpha;

    // Bucket rows by label so that Gram matrices accumulate from the last stick down.
    std::vector<std::vector<Index>> by_label(sticks + 1);
    for (Index i = 0; i < labels.size(); ++i) by_label[std::min<Index>(labels[i], sticks)].push_back(i);

    Matrix gram = Matrix::Zero(dim, dim);
    for (Index i : by_label[sticks]) gram.selfadjointView<Eigen::Lower>().rankUpdate(design.row(i).transpose());
    for (Index r = sticks - 1; r >= 0; --r) {
        for (Index i : by_label[r]) gram.selfadjointView<Eigen::Lower>().rankUpdate(design.row(i).transpose());
        Vector lin = Vector::Constant(dim, mu_alpha / sigma2_alpha);
        for (Index k = r; k <= sticks; ++k)
            for (Index i : by_label[k]) lin += z(i, r) * design.row(i).transpose();
        Matrix prec = gram.selfadjointView<Eigen::Lower>();
        prec.diagonal().array() += 1.0 / sigma2_alpha;
        alpha.row(r) = draw_gaussian_canonical(prec, lin, eng).transpose();
    }
    return alpha;
}

// Predictive draw of a score at covariates x~: a label from the stick weights, then its atom.
inline ScoreDraw sample_scores_prior(const Eigen::Ref<const Eigen::RowVectorXd>& design_row, const Matrix& alpha,
                                     const Vector& eta, const Vector& tau, Engine& eng) {
    const Vector w = stick_weights(design_row, alpha);
    const int label = categorical(eng, std::span<const double>(w.data(), static_cast<size_t>(w.size())));
    return {label, eta[label] + std_normal(eng) / std::sqrt(tau[label])};
}

}  // namespace cfm
