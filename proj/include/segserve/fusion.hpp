#pragma once

// Dual-modal late-fusion diagnosis: per-modality feature extraction followed
// by one of three fusion strategies and an argmax over class scores.
//
//   concat           r = E_con [G_f ; G_o]
//   feature_weighted r = E_add (lambda G_f + (1 - lambda) G_o)
//   score_weighted   r = lambda E_f G_f + (1 - lambda) E_o G_o
//
// Matrices are stored class_count x feature_dim and applied as matrix-vector
// products.

#include "segserve/image.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace segserve {

class FeatureVector {
public:
    FeatureVector() = default;
    // Throws InvalidInput on an empty vector or non-finite entries.
    explicit FeatureVector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    bool operator==(const FeatureVector&) const = default;

private:
    std::vector<double> values_;
};

class ScoreVector {
public:
    ScoreVector() = default;
    explicit ScoreVector(std::vector<double> scores);

    std::size_t size() const noexcept { return scores_.size(); }
    std::span<const double> scores() const noexcept { return scores_; }
    double operator[](std::size_t i) const { return scores_[i]; }

    bool operator==(const ScoreVector&) const = default;

private:
    std::vector<double> scores_;
};

// Convex-combination weight. The closed interval is accepted; 0 and 1 select a
// single modality.
class Lambda {
public:
    explicit Lambda(double value);
    double value() const noexcept { return value_; }

private:
    double value_;
};

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

enum class FusionStrategy : std::uint8_t { Concat = 0, FeatureWeighted = 1, ScoreWeighted = 2 };

std::string_view to_string(FusionStrategy s) noexcept;
// Accepts "concat", "feature_weighted" / "feature", "score_weighted" / "score".
FusionStrategy parse_strategy(std::string_view name);

struct FusionWeights {
    FusionStrategy strategy = FusionStrategy::FeatureWeighted;
    Matrix primary;   // E_con, E_add or E_f
    Matrix secondary; // E_o; only used by ScoreWeighted
    double lambda = 0.5;

    std::size_t class_count() const noexcept { return primary.rows; }
    // Per-modality feature dimension n (E_con has 2n columns).
    std::size_t feature_dim() const noexcept;

    // Throws DimensionMismatch when the matrices disagree with the strategy.
    void validate() const;
};

// Entries drawn row-major from SplitMix64(seed), mapped to [-1, 1).
Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed);

// Weights for `strategy` generated from the seeded stream. For ScoreWeighted,
// E_f is drawn first and E_o continues the same stream.
FusionWeights generate_weights(FusionStrategy strategy, std::size_t class_count,
                               std::size_t feature_dim, std::uint64_t seed, double lambda = 0.5);

// "FWT1" binary weights file (little-endian).
std::vector<std::uint8_t> encode_weights(const FusionWeights& weights);
FusionWeights decode_weights(std::span<const std::uint8_t> bytes);
FusionWeights load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const FusionWeights& weights);

inline constexpr std::size_t kFeatureGrid = 14;

// Length of the block-mean vector the extractor projects from.
std::size_t raw_feature_length(std::size_t width, std::size_t height, std::size_t channels);

// Per-channel block means over a (up to) 14x14 floor-partitioned grid,
// ordered channel, block row, block column.
std::vector<double> block_means(const ImageGrid& image);

// dim x raw_len projection used by extract_features.
Matrix projection_matrix(std::size_t dim, std::size_t raw_len);

FeatureVector extract_features(const ImageGrid& image, std::size_t dim);

FeatureVector concat_features(const FeatureVector& gf, const FeatureVector& go);
ScoreVector linear_score(const Matrix& weights, const FeatureVector& g);
FeatureVector fuse_features_weighted(const FeatureVector& gf, const FeatureVector& go, Lambda lambda);
ScoreVector fuse_scores_weighted(const ScoreVector& rf, const ScoreVector& ro, Lambda lambda);

struct DiagnosisLabel {
    std::size_t index = 0;
    std::string name;

    bool operator==(const DiagnosisLabel&) const = default;
};

std::vector<std::string> default_class_names();

// Argmax; ties go to the lowest index. Throws InvalidInput on empty input or
// when names is non-empty and shorter than the score vector.
DiagnosisLabel classify(const ScoreVector& scores,
                        std::span<const std::string> names = {});

struct ModalPair {
    ImageGrid image_f;
    ImageGrid image_o;

    void validate() const;
};

struct Diagnosis {
    DiagnosisLabel label;
    ScoreVector scores;
};

Diagnosis diagnose(const ModalPair& pair, const FusionWeights& weights, Lambda lambda,
                   std::span<const std::string> names = {});

// Fusion and classification from precomputed per-modality features.
Diagnosis diagnose_features(const FeatureVector& gf, const FeatureVector& go,
                            const FusionWeights& weights, Lambda lambda,
                            std::span<const std::string> names = {});

} // namespace segserve
