#include "cfm/estimands.hpp"
#include "cfm/evaluation.hpp"
#include "cfm/random.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace cfm;

TEST(Summary, ConstantDraws) {
    const EffectSummary s = summarize_sate(Matrix::Constant(10, 1, 2.5), 0.9);
    EXPECT_EQ(s.mean[0], 2.5);
    EXPECT_EQ(s.median[0], 2.5);
    EXPECT_EQ(s.lower[0], 2.5);
    EXPECT_EQ(s.upper[0], 2.5);
    EXPECT_EQ(s.sd[0], 0.0);
}

TEST(Summary, HandInterpolatedQuantiles) {
    Matrix d(5, 1);
    d << 3, 1, 5, 2, 4;
    const EffectSummary s = summarize_sate(d, 0.9);
    EXPECT_NEAR(s.lower[0], 1.2, 1e-12);
    EXPECT_NEAR(s.upper[0], 4.8, 1e-12);
    EXPECT_EQ(s.median[0], 3.0);
    EXPECT_EQ(s.names[0], "y_1");
}

TEST(Summary, SymmetricDraws) {
    Matrix d(4, 1);
    d << -2, 2, -0.5, 0.5;
    const EffectSummary s = summarize_sate(d, 0.8);
    EXPECT_EQ(s.mean[0], 0.0);
    EXPECT_NEAR(s.lower[0], -s.upper[0], 1e-15);
}

TEST(Summary, Errors) {
    EXPECT_THROW(summarize_sate(Matrix::Zero(1, 2), 0.9), ValidationError);
    EXPECT_THROW(summarize_sate(Matrix::Zero(5, 2), 1.0), ValidationError);
    EXPECT_THROW(summarize_sate(Matrix::Zero(5, 2), 0.9, {"a"}), ValidationError);
}

TEST(Summary, MonotoneInLevelAndAffineEquivariant) {
    Engine eng(70);
    Matrix d(333, 3);
    for (Index i = 0; i < d.size(); ++i) d.data()[i] = std_normal(eng) * 2 + 1;
    EffectSummary prev = summarize_sate(d, 0.5);
    for (double level : {0.6, 0.8, 0.9, 0.95, 0.99}) {
        const EffectSummary s = summarize_sate(d, level);
        for (Index k = 0; k < 3; ++k) {
            EXPECT_LE(s.lower[k], prev.lower[k]);
            EXPECT_GE(s.upper[k], prev.upper[k]);
            EXPECT_LE(s.lower[k], s.median[k]);
            EXPECT_LE(s.median[k], s.upper[k]);
        }
        prev = s;
    }
    const double a = 2.5, b = -4;
    const EffectSummary s = summarize_sate(d, 0.9), t = summarize_sate((a * d.array() + b).matrix(), 0.9);
    for (Index k = 0; k < 3; ++k) {
        EXPECT_NEAR(t.mean[k], a * s.mean[k] + b, 1e-12);
        EXPECT_NEAR(t.median[k], a * s.median[k] + b, 1e-12);
        EXPECT_NEAR(t.lower[k], a * s.lower[k] + b, 1e-12);
        EXPECT_NEAR(t.upper[k], a * s.upper[k] + b, 1e-12);
        EXPECT_NEAR(t.sd[k], a * s.sd[k], 1e-12);
    }
}

TEST(Significance, Flags) {
    EffectSummary s;
    s.lower = Vector(3), s.upper = Vector(3), s.mean = Vector::Zero(3);
    s.lower << 0.2, -0.9, -0.1;
    s.upper << 0.9, -0.2, 0.3;
    EXPECT_EQ(significance_flags(s), (std::vector<int>{1, -1, 0}));
}

TEST(Summary, JsonRoundTrip) {
    Matrix d(6, 2);
    d << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12.5;
    const EffectSummary s = summarize_sate(d, 0.9, {"a", "b"});
    const EffectSummary r = summary_from_json(summary_to_json(s));
    EXPECT_EQ(r.names, s.names);
    EXPECT_EQ(r.mean, s.mean);
    EXPECT_EQ(r.lower, s.lower);
    EXPECT_EQ(r.upper, s.upper);
    EXPECT_EQ(r.draws, 6);
    EXPECT_THROW(summary_from_json(nlohmann::json{{"level", 0.9}}), ValidationError);
}

// ---------------------------------------------------------------------------

namespace {

EffectSummary interval(double mean, double lo, double hi) {
    EffectSummary s;
    s.mean = Vector::Constant(1, mean), s.lower = Vector::Constant(1, lo), s.upper = Vector::Constant(1, hi);
    return s;
}

}  // namespace

TEST(Metrics, SingleReplicate) {
    const auto m = replicate_metrics(interval(1.5, 0, 2), Vector::Constant(1, 1.0), "ddp");
    const auto a = aggregate_metrics({m});
    EXPECT_DOUBLE_EQ(a.bias[0], 0.5);
    EXPECT_DOUBLE_EQ(a.mse[0], 0.25);
    EXPECT_EQ(a.coverage[0], 1.0);
}

TEST(Metrics, SymmetricBiases) {
    const auto a = aggregate_metrics({replicate_metrics(interval(0.3, 0, 1), Vector::Zero(1), "m"),
                                      replicate_metrics(interval(-0.3, -1, -0.5), Vector::Zero(1), "m")});
    EXPECT_NEAR(a.bias[0], 0.0, 1e-15);
    EXPECT_NEAR(a.mse[0], 0.09, 1e-15);
    EXPECT_EQ(a.coverage[0], 0.5);
}

TEST(Metrics, MatchesScriptedAveragesAndIdentity) {
    Engine eng(71);
    std::vector<ReplicateMetrics> reps;
    double bias = 0, mse = 0, cover = 0;
    std::vector<double> b;
    for (int r = 0; r < 20; ++r) {
        const double truth = std_normal(eng), mean = truth + 0.3 * std_normal(eng) + 0.1;
        const double lo = mean - 0.4, hi = mean + 0.4;
        reps.push_back(replicate_metrics(interval(mean, lo, hi), Vector::Constant(1, truth), "m"));
        bias += mean - truth, mse += (mean - truth) * (mean - truth), cover += (lo <= truth && truth <= hi);
        b.push_back(mean - truth);
    }
    const auto a = aggregate_metrics(reps);
    EXPECT_NEAR(a.bias[0], bias / 20, 1e-14);
    EXPECT_NEAR(a.mse[0], mse / 20, 1e-14);
    EXPECT_NEAR(a.coverage[0], cover / 20, 1e-14);
    EXPECT_GE(a.coverage[0], 0.0);
    EXPECT_LE(a.coverage[0], 1.0);
    EXPECT_NEAR(a.mse[0], a.bias[0] * a.bias[0] + a.bias_variance[0], 1e-12);
    EXPECT_THROW(aggregate_metrics({}), ValidationError);
}

TEST(Varimax, SingleFactorIsIdentity) {
    Matrix l(4, 1);
    l << 0.1, 0.5, -0.3, 0.9;
    const auto r = varimax(l);
    EXPECT_EQ(r.rotation, Matrix::Identity(1, 1));
    EXPECT_EQ(r.rotated, l);
}

TEST(Varimax, SimpleStructureIsFixedPoint) {
    Matrix l(4, 2);
    l << 0.9, 0, 0.7, 0, 0, 0.8, 0, 0.6;
    const auto r = varimax(l);
    EXPECT_NEAR(r.criterion, varimax_criterion(l), 1e-12);
    EXPECT_LT((r.rotation.cwiseAbs() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Varimax, MatchesBruteForceAngle) {
    Matrix l(4, 2);
    l << 0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5;
    double best = -1;
    for (double a = 0; a < std::numbers::pi / 2; a += 1e-4) {
        Matrix rot(2, 2);
        rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
        best = std::max(best, varimax_criterion(l * rot));
    }
    EXPECT_NEAR(varimax(l).criterion, best, 1e-3);
}

TEST(Varimax, PreservesFittedCovarianceAndNeverDecreasesCriterion) {
    Engine eng(72);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix l(12, 1 + trial % 4);
        for (Index i = 0; i < l.size(); ++i) l.data()[i] = std_normal(eng);
        for (bool kaiser : {false, true}) {
            const auto r = varimax(l, 1e-10, 1000, kaiser);
            EXPECT_LT((r.rotated * r.rotated.transpose() - l * l.transpose()).cwiseAbs().maxCoeff(), 1e-10);
            EXPECT_LT((r.rotation.transpose() * r.rotation - Matrix::Identity(l.cols(), l.cols())).cwiseAbs().maxCoeff(), 1e-12);
            if (!kaiser) EXPECT_GE(r.criterion, varimax_criterion(l) - 1e-12);
        }
    }
}

TEST(VarianceExplained, Cases) {
    EXPECT_EQ(variance_explained(Matrix::Zero(3, 2), Vector::Ones(3)).total, 0.0);
    Matrix l(2, 2);
    l << 3, 0, 0, 1;
    const auto v = variance_explained(l, Vector::Constant(2, 3.0));
    EXPECT_NEAR(v.share[0], 9.0 / 16, 1e-15);
    EXPECT_NEAR(v.share[1], 1.0 / 16, 1e-15);
    EXPECT_NEAR(v.total, 10.0 / 16, 1e-15);
    EXPECT_NEAR(variance_explained(l, Vector::Constant(2, 1e-12)).total, 1.0, 1e-9);
}

TEST(Alignment, PermutedAndFlipped) {
    Matrix l(5, 2);
    l << 1, 0.1, 0.8, -0.2, 0.1, 0.9, -0.3, 0.7, 0.5, 0.5;
    Matrix e(5, 2);
    e.col(0) = l.col(1);
    e.col(1) = -l.col(0);
    const auto a = align_loadings(e, l);
    EXPECT_EQ(a.column, (std::vector<int>{1, 0}));
    EXPECT_EQ(a.sign, (std::vector<int>{-1, 1}));
    EXPECT_NEAR(a.correlation.minCoeff(), 1.0, 1e-12);
    EXPECT_LT((a.aligned - l).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Alignment, SmallNoiseAndIndependentReference) {
    Engine eng(73);
    const Index q = 50;
    Matrix l(q, 3), noisy(q, 3);
    for (Index i = 0; i < l.size(); ++i) l.data()[i] = std_normal(eng), noisy.data()[i] = l.data()[i] + 0.01 * std_normal(eng);
    EXPECT_GT(align_loadings(noisy, l).correlation.minCoeff(), 0.99);
    double mean_abs = 0;
    for (int r = 0; r < 200; ++r) {
        Matrix other(q, 3);
        for (Index i = 0; i < other.size(); ++i) other.data()[i] = std_normal(eng);
        mean_abs += align_loadings(other, l).correlation.mean();
    }
    mean_abs /= 200;
    // Maximum of nine |N(0, 1/q)| values, picked greedily; a few multiples of 1/sqrt(q).
    EXPECT_LT(mean_abs, 4 / std::sqrt(static_cast<double>(q)));
    EXPECT_GT(mean_abs, 0.5 / std::sqrt(static_cast<double>(q)));
}

TEST(PosteriorMeanLoadings, SignAligned) {
    ParamSnapshot a, b;
    Matrix l(2, 1);
    l << 1, 2;
    a.loadings[0] = l, b.loadings[0] = -l;
    EXPECT_EQ(posterior_mean_loadings({a, b}, 0), l);
}

TEST(Ess, IidAndAr1AndConstant) {
    Engine eng(74);
    std::vector<double> iid(10000), ar(10000);
    double prev = 0;
    for (size_t i = 0; i < iid.size(); ++i) {
        iid[i] = std_normal(eng);
        prev = 0.9 * prev + std::sqrt(1 - 0.81) * std_normal(eng);
        ar[i] = prev;
    }
    const double e = effective_sample_size(iid).ess;
    EXPECT_GE(e, 8000);
    EXPECT_LE(e, 12000);
    const double target = 10000 * 0.1 / 1.9;
    const double ea = effective_sample_size(ar).ess;
    EXPECT_GT(ea, target / 1.5);
    EXPECT_LT(ea, target * 1.5);
    EXPECT_TRUE(effective_sample_size(std::vector<double>(50, 1.0)).zero_variance);
    EXPECT_THROW(effective_sample_size(std::vector<double>(5, 1.0)), ValidationError);
}

TEST(Rhat, IdenticalAndShiftedChains) {
    std::vector<double> a{1, 2, 3, 4, 5, 6}, b = a, c = a;
    EXPECT_NEAR(two_chain_ratio(a, b), std::sqrt(5.0 / 6.0), 1e-12);
    for (double& v : c) v += 100;
    EXPECT_GT(two_chain_ratio(a, c), 10);
}
