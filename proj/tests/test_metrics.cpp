#include <gtest/gtest.h>

#include <cmath>

#include "vrpcp/errors.hpp"
#include "vrpcp/metrics.hpp"
#include "vrpcp/rng.hpp"

using namespace vrpcp;

namespace {

struct Oracle {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    std::optional<double> auc;
};

// Explicit loops over every example and every positive/negative pair.
Oracle brute_force(const std::vector<double>& s, const std::vector<int>& y) {
    Oracle o;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const int predicted = s[i] <= 0.5 ? 0 : 1;
        if (predicted == 1 && y[i] == 1) ++o.tp;
        if (predicted == 1 && y[i] == 0) ++o.fp;
        if (predicted == 0 && y[i] == 1) ++o.fn;
        if (predicted == 0 && y[i] == 0) ++o.tn;
    }
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                if (s[i] > s[j]) wins += 1;
                if (s[i] == s[j]) wins += 0.5;
            }
    if (pairs > 0) o.auc = wins / pairs;
    return o;
}

std::pair<std::vector<double>, std::vector<int>> random_instance(CounterRng& rng) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 50));
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = rng.bernoulli(0.5);  // coarse scores force ties, including exact 0.5
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = coarse ? static_cast<double>(rng.uniform_int(0, 8)) / 8.0 : rng.uniform();
        y[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    return {s, y};
}

}  // namespace

TEST(Metrics, ConfusionExample) {
    // tp=2, fp=1, fn=1, tn=6.
    const std::vector<double> s{0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.2, 0.3, 0.4, 0.45};
    const std::vector<int> y{1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
    const auto r = compute_metrics(s, y);
    EXPECT_EQ(r.confusion, (Confusion{2, 1, 1, 6}));
    EXPECT_DOUBLE_EQ(r.acc, 0.8);
    EXPECT_DOUBLE_EQ(*r.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*r.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*r.f1, 2.0 / 3.0);
}

TEST(Metrics, AucExample) {
    EXPECT_DOUBLE_EQ(*rank_auc({0.9, 0.8, 0.3}, {1, 0, 1}), 0.5);
}

TEST(Metrics, PerfectSeparation) {
    const auto r = compute_metrics({0.9, 0.7, 0.2, 0.1}, {1, 1, 0, 0});
    EXPECT_EQ(r.acc, 1.0);
    EXPECT_EQ(*r.auc, 1.0);
    EXPECT_EQ(*r.f1, 1.0);
    EXPECT_EQ(*r.precision, 1.0);
    EXPECT_EQ(*r.recall, 1.0);
}

TEST(Metrics, TieAtHalfPredictsNotCrossing) {
    const auto c = confusion_at_half({0.5, 0.5}, {1, 0});
    EXPECT_EQ(c, (Confusion{0, 0, 1, 1}));
}

TEST(Metrics, SingleClassAucAbsent) {
    const auto r = compute_metrics({0.2, 0.9}, {0, 0});
    EXPECT_FALSE(r.auc.has_value());
    EXPECT_FALSE(r.recall.has_value());
    EXPECT_TRUE(r.precision.has_value());
    EXPECT_NE(r.to_json().find("\"auc_defined\": false"), std::string::npos);
}

TEST(Metrics, MatchesBruteForceOracle) {
    CounterRng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const auto [s, y] = random_instance(rng);
        const auto r = compute_metrics(s, y);
        const auto o = brute_force(s, y);
        EXPECT_EQ(r.confusion, (Confusion{o.tp, o.fp, o.fn, o.tn}));
        EXPECT_EQ(r.acc, static_cast<double>(o.tp + o.tn) / static_cast<double>(s.size()));
        ASSERT_EQ(r.auc.has_value(), o.auc.has_value());
        if (o.auc) EXPECT_NEAR(*r.auc, *o.auc, 1e-12);
        if (o.tp + o.fp > 0) EXPECT_EQ(*r.precision, static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fp));
        if (o.tp + o.fn > 0) EXPECT_EQ(*r.recall, static_cast<double>(o.tp) / static_cast<double>(o.tp + o.fn));
    }
}

TEST(Metrics, AucInvariantUnderMonotoneTransform) {
    CounterRng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        auto [s, y] = random_instance(rng);
        const auto a = rank_auc(s, y);
        for (auto& v : s) v = std::exp(3.0 * v) - 7.0;
        const auto b = rank_auc(s, y);
        ASSERT_EQ(a.has_value(), b.has_value());
        if (a) EXPECT_NEAR(*a, *b, 1e-12);
    }
}

TEST(Metrics, InvariantsHold) {
    CounterRng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const auto [s, y] = random_instance(rng);
        const auto r = compute_metrics(s, y);
        const auto& c = r.confusion;
        EXPECT_EQ(c.tp + c.fp + c.fn + c.tn, r.n_examples);
        for (const auto& v : {std::optional<double>(r.acc), r.auc, r.f1, r.precision, r.recall})
            if (v) {
                EXPECT_GE(*v, 0.0);
                EXPECT_LE(*v, 1.0);
            }
        if (r.f1) EXPECT_NEAR(*r.f1, 2 * *r.precision * *r.recall / (*r.precision + *r.recall), 1e-15);
    }
}

TEST(Metrics, JsonRoundTripIsLossless) {
    CounterRng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto [s, y] = random_instance(rng);
        auto r = compute_metrics(s, y);
        r.config_hash = "0123456789abcdef";
        r.seed = rng.next_u64();
        EXPECT_EQ(MetricsReport::from_json(r.to_json()), r);
    }
    EXPECT_THROW(MetricsReport::from_json("{\"acc\": 1}"), DataError);
}

TEST(Metrics, InvalidInputs) {
    EXPECT_THROW(compute_metrics({}, {}), DataError);
    EXPECT_THROW(compute_metrics({0.1}, {1, 0}), DimensionError);
    EXPECT_THROW(compute_metrics({0.1}, {2}), RangeError);
    EXPECT_THROW(compute_metrics({std::nan("")}, {1}), NumericDomainError);
}
