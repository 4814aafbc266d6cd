#pragma once
// Gibbs sampler for the treatment-specific factor regression
//
//   y_i | T_i = t  ~  N(mu_t + B_t x_i + Lambda_t l_it, Psi_t)
//
// with probit stick-breaking mixture priors on the scores l_it and MGP
// shrinkage on Lambda_t. Each sweep updates both arms in the order of
// kSweepOrder and finishes by imputing the missing potential outcomes.
//
// Random numbers: every (sweep, arm, block) triple owns a substream derived
// from the chain seed, so freezing a block never shifts the variates seen by
// the others.

#include "cfm/config.hpp"
#include "cfm/data.hpp"
#include "cfm/errors.hpp"
#include "cfm/linalg.hpp"
#include "cfm/mgp.hpp"
#include "cfm/psb.hpp"
#include "cfm/random.hpp"
#include "cfm/state.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfm {

enum class Block : int {
    regression,
    scores,
    loadings,
    idiosyncratic,
    local_precisions,
    global_increments,
    allocation,
    atoms,
    augmentation,
    sticks,
    imputation,
};

inline constexpr std::array<Block, 11> kSweepOrder{
    Block::regression,   Block::scores,     Block::loadings,     Block::idiosyncratic,
    Block::local_precisions, Block::global_increments, Block::allocation, Block::atoms,
    Block::augmentation, Block::sticks,     Block::imputation,
};

inline const char* block_name(Block b) {
    switch (b) {
        case Block::regression: return "regression";
        case Block::scores: return "scores";
        case Block::loadings: return "loadings";
        case Block::idiosyncratic: return "idiosyncratic";
        case Block::local_precisions: return "local_precisions";
        case Block::global_increments: return "global_increments";
        case Block::allocation: return "allocation";
        case Block::atoms: return "atoms";
        case Block::augmentation: return "augmentation";
        case Block::sticks: return "sticks";
        case Block::imputation: return "imputation";
    }
    return "?";
}

// Which blocks run during a sweep. The order itself is fixed.
struct SweepPlan {
    std::array<bool, kSweepOrder.size()> enabled{true, true, true, true, true, true, true, true, true, true, true};

    bool runs(Block b) const { return enabled[static_cast<size_t>(b)]; }
    SweepPlan& freeze(Block b) {
        enabled[static_cast<size_t>(b)] = false;
        return *this;
    }

    // Standard-normal scores: the mixture machinery is switched off.
    static SweepPlan standard_prior() {
        SweepPlan p;
        p.freeze(Block::allocation).freeze(Block::atoms).freeze(Block::augmentation).freeze(Block::sticks);
        return p;
    }
};

// Independent Gaussian prior on each coefficient of one outcome row.
struct RegressionPrior {
    Vector mean;
    Vector precision;

    static RegressionPrior from_config(const ModelConfig& cfg, Index p) {
        RegressionPrior r{Vector::Constant(p + 1, cfg.mu_beta), Vector::Constant(p + 1, 1.0 / cfg.sigma2_beta)};
        r.mean[0] = cfg.mu_m;
        r.precision[0] = 1.0 / cfg.sigma2_m;
        return r;
    }
};

// Row-wise update of the regression coefficients.
//
// `resid` is y - Lambda l for the arm's factual units (m x q); `design` is
// the matching rows of the regression design (m x d). Returns q x d.
inline Matrix update_regression(const Matrix& resid, const Matrix& design, const Vector& psi,
                                const RegressionPrior& prior, Engine& eng) {
    const Index q = resid.cols();
    const Index d = design.cols();
    const Matrix gram = design.transpose() * design;
    const Matrix cross = design.transpose() * resid;  // d x q
    Matrix coef(q, d);
    Matrix prec(d, d);
    const Vector prior_lin = prior.precision.cwiseProduct(prior.mean);
    for (Index k = 0; k < q; ++k) {
        prec = gram / psi[k];
        prec.diagonal() += prior.precision;
        const Vector lin = prior_lin + cross.col(k) / psi[k];
        coef.row(k) = draw_gaussian_canonical(prec, lin, eng).transpose();
    }
    return coef;
}

// Joint update of each factual unit's score vector given its cluster labels.
//
// `resid` is y - mu - B x (m x q); labels are m x J; eta/tau are L x J.
inline Matrix update_factual_scores(const Matrix& resid, const Matrix& loadings, const Vector& psi,
                                    const IntMatrix& labels, const Matrix& eta, const Matrix& tau, Engine& eng) {
    const Index m = resid.rows();
    const Index J = loadings.cols();
    const Matrix weighted = psi.cwiseInverse().asDiagonal() * loadings;  // Psi^{-1} Lambda
    const Matrix info = loadings.transpose() * weighted;
    const Matrix lin_all = resid * weighted;  // m x J
    Matrix scores(m, J);
    Matrix prec(J, J);
    Vector lin(J);
    for (Index i = 0; i < m; ++i) {
        prec = info;
        for (Index h = 0; h < J; ++h) {
            const int s = labels(i, h);
            prec(h, h) += tau(s, h);
            lin[h] = lin_all(i, h) + tau(s, h) * eta(s, h);
        }
        scores.row(i) = draw_gaussian_canonical(prec, lin, eng).transpose();
    }
    return scores;
}

// Draws Y(t) for every unit in `units` from arm t's posterior predictive.
// Scores and labels for those units are overwritten with the predictive draws.
inline Matrix impute_arm(ArmState& s, const Matrix& design, const std::vector<int>& units, bool noise, Engine& eng) {
    const Index J = s.factors();
    const Index q = s.q();
    Matrix out(static_cast<Index>(units.size()), q);
    Vector l(J);
    const Vector sd = s.psi.cwiseSqrt();
    for (size_t r = 0; r < units.size(); ++r) {
        const int i = units[r];
        for (Index h = 0; h < J; ++h) {
            const ScoreDraw d = sample_scores_prior(design.row(i), s.alpha[h], s.eta.col(h), s.tau.col(h), eng);
            s.labels(i, h) = d.label;
            s.scores(i, h) = l[h] = d.score;
        }
        Vector y = s.coef * design.row(i).transpose() + s.loadings * l;
        if (noise)
            for (Index k = 0; k < q; ++k) y[k] += sd[k] * std_normal(eng);
        out.row(static_cast<Index>(r)) = y.transpose();
    }
    return out;
}

// Regression design (1, x_i) for every unit.
inline Matrix design_matrix(const Matrix& x) {
    Matrix d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    return d;
}

// Missing potential outcomes Y^mis for every unit: Y(0) for treated, Y(1) for controls.
inline Matrix impute_counterfactuals(std::array<ArmState, 2>& arms, const Dataset& data, bool noise, Engine& eng) {
    const Matrix design = design_matrix(data.x);
    Matrix mis(data.n(), data.q());
    for (int t = 0; t < 2; ++t) {
        const auto cf = data.arm_units(1 - t);
        const Matrix y = impute_arm(arms[t], design, cf, noise, eng);
        for (size_t r = 0; r < cf.size(); ++r) mis.row(cf[r]) = y.row(static_cast<Index>(r));
    }
    return mis;
}

struct ParamSnapshot {
    std::int64_t sweep = 0;
    std::array<Vector, 2> mu;
    std::array<Matrix, 2> regression;
    std::array<Matrix, 2> loadings;
    std::array<Vector, 2> psi;
};

struct ChainOutput {
    Matrix sate;  // kept draws x q
    std::vector<ParamSnapshot> params;
    std::vector<Matrix> counterfactuals;  // n x q per kept draw, when requested
    std::uint64_t seed = 0;
    ModelConfig config;
    std::vector<std::string> outcome_names;

    Index kept() const { return sate.rows(); }
};

class GibbsSampler {
public:
    GibbsSampler(Dataset data, ModelConfig cfg, std::uint64_t seed, SweepPlan plan = {})
        : data_(std::move(data)), cfg_(cfg), plan_(plan), seed_(seed) {
        validate_dataset(data_);
        if (cfg_.l_max < 1 || cfg_.j_max[0] < 1 || cfg_.j_max[1] < 1)
            throw ValidationError("sampler needs at least one factor and one cluster");
        design_ = design_matrix(data_.x);
        arms_ = init_state(data_, cfg_, seed_);
        reg_prior_ = RegressionPrior::from_config(cfg_, data_.p());
        atom_prior_ = AtomPrior{cfg_.mu_eta, cfg_.sigma2_eta, cfg_.gamma1, cfg_.gamma2, cfg_.fixed_tau};
        for (int t = 0; t < 2; ++t) {
            units_[t] = data_.arm_units(t);
            design_arm_[t] = gather(design_, units_[t]);
            z_[t].assign(cfg_.j_max[t], Matrix());
        }
        set_outcomes(data_.y);
    }

    // Replaces the observed outcomes (the Geweke test redraws them between sweeps).
    void set_outcomes(const Matrix& y) {
        data_.y = y;
        for (int t = 0; t < 2; ++t) {
            y_arm_[t] = gather(y, units_[t]);
            if (potential_[t].rows() == 0) potential_[t] = Matrix::Zero(data_.n(), data_.q());
            for (int i : units_[t]) potential_[t].row(i) = y.row(i);
        }
    }

    // Any failure inside a block is reported as a NumericalError naming the sweep and block.
    void sweep() {
        ++sweep_;
        for (int t = 0; t < 2; ++t) {
            try {
                sweep_arm(t);
            } catch (const NumericalError&) {
                throw;
            } catch (const std::runtime_error& e) {
                throw NumericalError(sweep_, t, block_name(current_), e.what());
            }
        }
    }

    std::int64_t sweeps_done() const { return sweep_; }
    const Dataset& data() const { return data_; }
    const ModelConfig& config() const { return cfg_; }
    const ArmState& arm(int t) const { return arms_[t]; }
    ArmState& arm(int t) { return arms_[t]; }
    const std::vector<int>& units(int t) const { return units_[t]; }
    const Matrix& design() const { return design_; }

    // Y(t) for every unit: observed where T = t, imputed elsewhere.
    const Matrix& potential_outcomes(int t) const { return potential_[t]; }

    Vector sate() const { return (potential_[1] - potential_[0]).colwise().mean().transpose(); }

    // Imputed outcomes under the unobserved treatment, n x q.
    Matrix counterfactuals() const {
        Matrix mis(data_.n(), data_.q());
        for (Index i = 0; i < data_.n(); ++i) mis.row(i) = potential_[1 - data_.t[i]].row(i);
        return mis;
    }

private:
    static Matrix gather(const Matrix& m, const std::vector<int>& rows) {
        Matrix out(static_cast<Index>(rows.size()), m.cols());
        for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
        return out;
    }

    Engine stream(int t, Block b) {
        current_ = b;
        return substream(seed_, {static_cast<std::uint64_t>(sweep_), static_cast<std::uint64_t>(t),
                                 static_cast<std::uint64_t>(b) + 1});
    }

    void guard(int t, Block b, bool finite) const {
        if (!finite) throw NumericalError(sweep_, t, block_name(b), "non-finite value");
    }

    Matrix factual_scores(int t) const { return gather(arms_[t].scores, units_[t]); }

    IntMatrix factual_labels(int t) const {
        const auto& u = units_[t];
        IntMatrix out(static_cast<Index>(u.size()), arms_[t].factors());
        for (size_t r = 0; r < u.size(); ++r) out.row(static_cast<Index>(r)) = arms_[t].labels.row(u[r]);
        return out;
    }

    void sweep_arm(int t) {
        ArmState& s = arms_[t];
        const auto& u = units_[t];
        const Matrix& y = y_arm_[t];
        const Matrix& design = design_arm_[t];
        const Index J = s.factors();

        if (plan_.runs(Block::regression)) {
            Engine eng = stream(t, Block::regression);
            const Matrix resid = y - factual_scores(t) * s.loadings.transpose();
            s.coef = update_regression(resid, design, s.psi, reg_prior_, eng);
            guard(t, Block::regression, s.coef.allFinite());
        }
        const Matrix fitted = design * s.coef.transpose();
        if (plan_.runs(Block::scores)) {
            Engine eng = stream(t, Block::scores);
            const Matrix scores = update_factual_scores(y - fitted, s.loadings, s.psi, factual_labels(t), s.eta, s.tau, eng);
            guard(t, Block::scores, scores.allFinite());
            for (size_t r = 0; r < u.size(); ++r) s.scores.row(u[r]) = scores.row(static_cast<Index>(r));
        }
        const Matrix scores = factual_scores(t);
        if (plan_.runs(Block::loadings)) {
            Engine eng = stream(t, Block::loadings);
            s.loadings = update_loadings(y - fitted, scores, s.psi, s.theta, s.iota, eng);
            guard(t, Block::loadings, s.loadings.allFinite());
        }
        if (plan_.runs(Block::idiosyncratic)) {
            Engine eng = stream(t, Block::idiosyncratic);
            s.psi = update_idiosyncratic(y - fitted - scores * s.loadings.transpose(), cfg_.a_psi, cfg_.b_psi, eng);
            guard(t, Block::idiosyncratic, s.psi.allFinite() && (s.psi.array() > 0).all());
        }
        if (plan_.runs(Block::local_precisions)) {
            Engine eng = stream(t, Block::local_precisions);
            s.theta = update_local_precisions(s.loadings, s.iota, cfg_.nu[t], eng);
            guard(t, Block::local_precisions, s.theta.allFinite());
        }
        if (plan_.runs(Block::global_increments)) {
            Engine eng = stream(t, Block::global_increments);
            auto g = update_global_increments(s.loadings, s.theta, s.delta, cfg_.a1[t], cfg_.a2[t], eng);
            s.delta = std::move(g.delta);
            s.iota = std::move(g.iota);
            guard(t, Block::global_increments, s.delta.allFinite() && s.iota.allFinite());
        }
        if (plan_.runs(Block::allocation)) {
            Engine eng = stream(t, Block::allocation);
            for (Index h = 0; h < J; ++h) {
                const IntVector lab = allocate_clusters(scores.col(h), design, s.alpha[h], s.eta.col(h), s.tau.col(h), eng, h);
                for (size_t r = 0; r < u.size(); ++r) s.labels(u[r], h) = lab[static_cast<Index>(r)];
            }
        }
        const IntMatrix labels = factual_labels(t);
        if (plan_.runs(Block::atoms)) {
            Engine eng = stream(t, Block::atoms);
            for (Index h = 0; h < J; ++h) {
                const IntVector lab = labels.col(h);
                auto atoms = update_atoms(scores.col(h), lab, s.clusters(), s.tau.col(h), atom_prior_, eng);
                s.eta.col(h) = atoms.eta;
                s.tau.col(h) = atoms.tau;
            }
            guard(t, Block::atoms, s.eta.allFinite() && s.tau.allFinite());
        }
        if (plan_.runs(Block::augmentation)) {
            Engine eng = stream(t, Block::augmentation);
            for (Index h = 0; h < J; ++h) {
                const IntVector lab = labels.col(h);
                z_[t][h] = augment_probit(lab, design, s.alpha[h], eng);
            }
        }
        if (plan_.runs(Block::sticks)) {
            Engine eng = stream(t, Block::sticks);
            for (Index h = 0; h < J; ++h) {
                const IntVector lab = labels.col(h);
                if (z_[t][h].rows() != lab.size())
                    throw NumericalError(sweep_, t, block_name(Block::sticks), "augmentation has not run");
                s.alpha[h] = update_stick_coefficients(z_[t][h], lab, design, 0.0, cfg_.sigma2_alpha, eng);
                guard(t, Block::sticks, s.alpha[h].allFinite());
            }
        }
        if (plan_.runs(Block::imputation)) {
            Engine eng = stream(t, Block::imputation);
            const auto& cf = units_[1 - t];
            const Matrix imputed = impute_arm(s, design_, cf, cfg_.predictive_noise, eng);
            guard(t, Block::imputation, imputed.allFinite());
            for (size_t r = 0; r < cf.size(); ++r) potential_[t].row(cf[r]) = imputed.row(static_cast<Index>(r));
        }
    }

    Dataset data_;
    ModelConfig cfg_;
    SweepPlan plan_;
    std::uint64_t seed_;
    std::int64_t sweep_ = 0;
    Block current_ = Block::regression;
    std::array<ArmState, 2> arms_;
    Matrix design_;
    std::array<std::vector<int>, 2> units_;
    std::array<Matrix, 2> design_arm_;
    std::array<Matrix, 2> y_arm_;
    std::array<Matrix, 2> potential_;
    std::array<std::vector<Matrix>, 2> z_;
    RegressionPrior reg_prior_;
    AtomPrior atom_prior_;
};

// Runs n_iter sweeps and keeps every thin-th draw after burn-in.
inline ChainOutput run_chain(const Dataset& data, const ModelConfig& cfg, std::uint64_t seed,
                             const SweepPlan& plan = {}) {
    if (cfg.burn_in >= cfg.n_iter || cfg.thin < 1 || cfg.burn_in < 0)
        throw ValidationError("invalid iteration settings");
    GibbsSampler sampler(data, cfg, seed, plan);
    ChainOutput out;
    out.seed = seed;
    out.config = cfg;
    out.outcome_names = data.outcome_names;
    out.sate.resize(cfg.kept_draws(), data.q());
    Index kept = 0;
    for (int it = 1; it <= cfg.n_iter; ++it) {
        sampler.sweep();
        if (it <= cfg.burn_in || (it - cfg.burn_in) % cfg.thin != 0) continue;
        out.sate.row(kept) = sampler.sate().transpose();
        if (cfg.store_params && kept % cfg.param_thin == 0) {
            ParamSnapshot snap;
            snap.sweep = it;
            for (int t = 0; t < 2; ++t) {
                const ArmState& s = sampler.arm(t);
                snap.mu[t] = s.intercept();
                snap.regression[t] = s.regression();
                snap.loadings[t] = s.loadings;
                snap.psi[t] = s.psi;
            }
            out.params.push_back(std::move(snap));
        }
        if (cfg.store_counterfactuals) out.counterfactuals.push_back(sampler.counterfactuals());
        ++kept;
    }
    if (!out.sate.allFinite()) throw NumericalError(cfg.n_iter, -1, "record", "non-finite SATE draw");
    return out;
}

inline ChainOutput run_chain(const Dataset& data, const ModelConfig& cfg) { return run_chain(data, cfg, cfg.rng_seed); }

// ---------------------------------------------------------------------------
// Prior simulation, used to check the sampler against the joint distribution.

inline ArmState draw_prior_arm(const Matrix& design, Index q, int factors, int clusters, const ModelConfig& cfg,
                               int arm, Engine& eng) {
    const Index n = design.rows();
    const Index d = design.cols();
    ArmState s;
    const RegressionPrior reg = RegressionPrior::from_config(cfg, d - 1);
    s.coef.resize(q, d);
    for (Index k = 0; k < q; ++k)
        for (Index c = 0; c < d; ++c) s.coef(k, c) = reg.mean[c] + std_normal(eng) / std::sqrt(reg.precision[c]);
    s.delta.resize(factors);
    for (int h = 0; h < factors; ++h) s.delta[h] = gamma_rate(eng, h == 0 ? cfg.a1[arm] : cfg.a2[arm], 1.0);
    s.iota = cumulative_products(s.delta);
    s.theta.resize(q, factors);
    s.loadings.resize(q, factors);
    for (Index j = 0; j < q; ++j)
        for (int h = 0; h < factors; ++h) {
            s.theta(j, h) = gamma_rate(eng, 0.5 * cfg.nu[arm], 0.5 * cfg.nu[arm]);
            s.loadings(j, h) = std_normal(eng) / std::sqrt(s.theta(j, h) * s.iota[h]);
        }
    s.psi.resize(q);
    for (Index j = 0; j < q; ++j) s.psi[j] = inv_gamma(eng, cfg.a_psi, cfg.b_psi);
    s.eta.resize(clusters, factors);
    s.tau.resize(clusters, factors);
    for (int l = 0; l < clusters; ++l)
        for (int h = 0; h < factors; ++h) {
            s.eta(l, h) = cfg.mu_eta + std::sqrt(cfg.sigma2_eta) * std_normal(eng);
            s.tau(l, h) = cfg.fixed_tau ? 1.0 : gamma_rate(eng, cfg.gamma1, cfg.gamma2);
        }
    s.alpha.assign(factors, Matrix(clusters - 1, d));
    for (int h = 0; h < factors; ++h)
        for (int r = 0; r < clusters - 1; ++r)
            for (Index c = 0; c < d; ++c) s.alpha[h](r, c) = std::sqrt(cfg.sigma2_alpha) * std_normal(eng);
    s.scores.resize(n, factors);
    s.labels.resize(n, factors);
    for (Index i = 0; i < n; ++i)
        for (int h = 0; h < factors; ++h) {
            const ScoreDraw dr = sample_scores_prior(design.row(i), s.alpha[h], s.eta.col(h), s.tau.col(h), eng);
            s.labels(i, h) = dr.label;
            s.scores(i, h) = dr.score;
        }
    return s;
}

// Outcomes for `units` drawn from the arm's likelihood at its current scores.
inline Matrix draw_outcomes(const ArmState& s, const Matrix& design, const std::vector<int>& units, Engine& eng) {
    Matrix y(static_cast<Index>(units.size()), s.q());
    const Vector sd = s.psi.cwiseSqrt();
    for (size_t r = 0; r < units.size(); ++r) {
        const int i = units[r];
        Vector v = s.coef * design.row(i).transpose() + s.loadings * s.scores.row(i).transpose();
        for (Index k = 0; k < v.size(); ++k) v[k] += sd[k] * std_normal(eng);
        y.row(static_cast<Index>(r)) = v.transpose();
    }
    return y;
}

}  // namespace cfm
