#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace segserve {

struct LabeledScore {
    double score = 0.0;
    bool positive = false;
};

// Probability that a random positive outscores a random negative, ties
// counted as one half. O(n log n) via tie-aware ranking.
// Throws DegenerateLabels unless both classes are present.
double auroc(std::span<const LabeledScore> data);

// One-vs-rest AUROC per class from a row-major (n x class_count) score
// matrix, macro-averaged. Classes absent from `truths` (or present in every
// row) are skipped; throws DegenerateLabels if no class is usable.
double auroc_macro_ovr(std::span<const double> scores, std::size_t class_count,
                       std::span<const std::size_t> truths);

// TP / (TP + FN) for `positive_class`.
double recall(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
              std::size_t positive_class);

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truths);

} // namespace segserve
