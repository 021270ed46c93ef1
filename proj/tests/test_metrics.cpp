#include "segserve/error.hpp"
#include "segserve/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace segserve;

namespace {

template <typename F>
void expect_code(ErrorCode code, F&& f) {
    try {
        f();
        ADD_FAILURE() << "expected " << to_string(code);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
    }
}

std::vector<LabeledScore> labeled(const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<LabeledScore> out;
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], y[i] == 1});
    return out;
}

} // namespace

TEST(Auroc, Examples) {
    EXPECT_DOUBLE_EQ(auroc(labeled({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0})), 1.0);
    EXPECT_DOUBLE_EQ(auroc(labeled({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0})), 0.0);
    EXPECT_DOUBLE_EQ(auroc(labeled({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0})), 0.5);
    EXPECT_DOUBLE_EQ(auroc(labeled({0.9, 0.4, 0.6, 0.1}, {1, 1, 0, 0})), 0.75);
}

TEST(Auroc, DegenerateLabels) {
    expect_code(ErrorCode::DegenerateLabels, [] { auroc(labeled({0.1, 0.2}, {1, 1})); });
    expect_code(ErrorCode::DegenerateLabels, [] { auroc(labeled({0.1, 0.2}, {0, 0})); });
    expect_code(ErrorCode::DegenerateLabels, [] { auroc(std::vector<LabeledScore>{}); });
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 1);
    std::bernoulli_distribution b(0.4);
    std::vector<LabeledScore> d(300), t(300);
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = {n(rng), b(rng)};
        t[i] = {std::exp(3.0 * d[i].score) + 7.0, d[i].positive};
    }
    EXPECT_DOUBLE_EQ(auroc(d), auroc(t));
}

TEST(Auroc, MatchesPairwiseOracleWithTies) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> size(2, 200);
        std::uniform_int_distribution<int> level(0, 9);
        const int n = size(rng);
        std::vector<LabeledScore> d(n);
        std::vector<double> pos, neg;
        for (int i = 0; i < n; ++i) {
            d[i] = {level(rng) / 10.0, i == 0 ? true : (i == 1 ? false : rng() % 2 == 0)};
            (d[i].positive ? pos : neg).push_back(d[i].score);
        }
        EXPECT_LE(std::abs(auroc(d) - oracle::auroc_pairwise(pos, neg)), 1e-12);
    }
}

TEST(AurocMacroOvr, AveragesPerClass) {
    // Three classes, perfectly separated by their own column.
    const std::vector<double> scores = {0.9, 0.05, 0.05, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6, 0.7, 0.2, 0.1};
    const std::vector<std::size_t> truths = {0, 1, 2, 0};
    EXPECT_DOUBLE_EQ(auroc_macro_ovr(scores, 3, truths), 1.0);
    expect_code(ErrorCode::DimensionMismatch, [&] { auroc_macro_ovr(scores, 4, truths); });
    const std::vector<std::size_t> same = {1, 1, 1, 1};
    expect_code(ErrorCode::DegenerateLabels, [&] { auroc_macro_ovr(scores, 3, same); });
}

TEST(Recall, Examples) {
    const std::vector<std::size_t> p = {1, 0, 1, 1};
    const std::vector<std::size_t> t = {1, 1, 0, 1};
    EXPECT_DOUBLE_EQ(recall(p, t, 1), 2.0 / 3.0);
    const std::vector<std::size_t> p2 = {1, 1, 1, 1};
    EXPECT_DOUBLE_EQ(recall(p2, t, 1), 1.0);
    const std::vector<std::size_t> zeros = {0, 0};
    expect_code(ErrorCode::DegenerateLabels, [&] { recall(zeros, zeros, 1); });
}

TEST(Accuracy, Examples) {
    const std::vector<std::size_t> p = {0, 1, 2, 2};
    const std::vector<std::size_t> t = {0, 1, 1, 2};
    EXPECT_DOUBLE_EQ(accuracy(p, t), 0.75);
    EXPECT_DOUBLE_EQ(accuracy(t, t), 1.0);
    expect_code(ErrorCode::InvalidInput, [] { accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}); });
    const std::vector<std::size_t> shorter = {0};
    expect_code(ErrorCode::DimensionMismatch, [&] { accuracy(shorter, t); });
}

TEST(Accuracy, MatchesCountOracle) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> label(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> p(100), t(100);
        for (std::size_t i = 0; i < 100; ++i) {
            p[i] = label(rng);
            t[i] = label(rng);
        }
        t[0] = 1;
        EXPECT_DOUBLE_EQ(accuracy(p, t), oracle::accuracy_count(p, t));
        EXPECT_DOUBLE_EQ(recall(p, t, 1), oracle::recall_count(p, t, 1));
    }
}
