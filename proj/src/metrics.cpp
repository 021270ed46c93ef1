#include "segserve/metrics.hpp"

#include "segserve/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace segserve {

namespace {

void require_same_length(std::size_t a, std::size_t b) {
    if (a != b) {
        fail(ErrorCode::DimensionMismatch,
             "prediction/truth length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

} // namespace

double auroc(std::span<const LabeledScore> data) {
    std::size_t pos = 0;
    for (const auto& e : data) {
        if (!std::isfinite(e.score)) fail(ErrorCode::InvalidInput, "non-finite score");
        pos += e.positive ? 1 : 0;
    }
    const std::size_t neg = data.size() - pos;
    if (pos == 0 || neg == 0) fail(ErrorCode::DegenerateLabels, "AUROC needs both positives and negatives");

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return data[a].score < data[b].score; });

    // Walk tie groups in ascending order. A positive beats every negative in
    // earlier groups and splits credit with the negatives in its own group.
    // Counts stay integral (doubled) so integer inputs are exact.
    std::size_t negatives_below = 0;
    std::size_t doubled_wins = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t group_pos = 0;
        std::size_t group_neg = 0;
        while (j < order.size() && data[order[j]].score == data[order[i]].score) {
            (data[order[j]].positive ? group_pos : group_neg) += 1;
            ++j;
        }
        doubled_wins += group_pos * (2 * negatives_below + group_neg);
        negatives_below += group_neg;
        i = j;
    }
    return static_cast<double>(doubled_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc_macro_ovr(std::span<const double> scores, std::size_t class_count,
                       std::span<const std::size_t> truths) {
    if (class_count == 0 || scores.size() != truths.size() * class_count) {
        fail(ErrorCode::DimensionMismatch, "score matrix does not match truths x class_count");
    }
    double total = 0.0;
    std::size_t used = 0;
    std::vector<LabeledScore> column(truths.size());
    for (std::size_t c = 0; c < class_count; ++c) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < truths.size(); ++i) {
            column[i] = {scores[i * class_count + c], truths[i] == c};
            pos += truths[i] == c ? 1 : 0;
        }
        if (pos == 0 || pos == truths.size()) continue;
        total += auroc(column);
        ++used;
    }
    if (used == 0) fail(ErrorCode::DegenerateLabels, "no class has both positives and negatives");
    return total / static_cast<double>(used);
}

double recall(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
              std::size_t positive_class) {
    require_same_length(preds.size(), truths.size());
    std::size_t tp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] != positive_class) continue;
        (preds[i] == positive_class ? tp : fn) += 1;
    }
    if (tp + fn == 0) fail(ErrorCode::DegenerateLabels, "no positives among truths");
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truths) {
    require_same_length(preds.size(), truths.size());
    if (truths.empty()) fail(ErrorCode::InvalidInput, "accuracy of an empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) hits += preds[i] == truths[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truths.size());
}

} // namespace segserve
