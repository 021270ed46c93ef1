#include "segserve/fusion.hpp"

#include "segserve/error.hpp"
#include "segserve/image_io.hpp"
#include "segserve/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace segserve {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        fail(ErrorCode::DimensionMismatch,
             std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail(ErrorCode::InvalidInput, "truncated weights file");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

Matrix read_matrix(ByteReader& in, std::size_t rows, std::size_t cols) {
    if (in.remaining() / 8 < rows * cols) fail(ErrorCode::InvalidInput, "truncated weights file");
    Matrix m(rows, cols);
    for (auto& v : m.data) v = in.f64();
    if (!all_finite(m.data)) fail(ErrorCode::InvalidInput, "non-finite weight");
    return m;
}

// Floor-partitioned block boundary b of `grid` blocks over `size` samples.
std::size_t block_edge(std::size_t b, std::size_t size, std::size_t grid) {
    return b * size / grid;
}

} // namespace

FeatureVector::FeatureVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) fail(ErrorCode::InvalidInput, "feature vector must be non-empty");
    if (!all_finite(values_)) fail(ErrorCode::InvalidInput, "feature vector has non-finite entries");
}

ScoreVector::ScoreVector(std::vector<double> scores) : scores_(std::move(scores)) {
    if (!all_finite(scores_)) fail(ErrorCode::InvalidInput, "score vector has non-finite entries");
}

Lambda::Lambda(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
        fail(ErrorCode::InvalidInput, "lambda must lie in [0, 1]");
    }
}

std::string_view to_string(FusionStrategy s) noexcept {
    switch (s) {
    case FusionStrategy::Concat: return "concat";
    case FusionStrategy::FeatureWeighted: return "feature_weighted";
    case FusionStrategy::ScoreWeighted: return "score_weighted";
    }
    return "unknown";
}

FusionStrategy parse_strategy(std::string_view name) {
    if (name == "concat") return FusionStrategy::Concat;
    if (name == "feature_weighted" || name == "feature") return FusionStrategy::FeatureWeighted;
    if (name == "score_weighted" || name == "score") return FusionStrategy::ScoreWeighted;
    fail(ErrorCode::InvalidInput, "unknown fusion strategy '" + std::string(name) + "'");
}

std::size_t FusionWeights::feature_dim() const noexcept {
    return strategy == FusionStrategy::Concat ? primary.cols / 2 : primary.cols;
}

void FusionWeights::validate() const {
    if (primary.rows == 0 || primary.cols == 0 || primary.data.size() != primary.rows * primary.cols) {
        fail(ErrorCode::DimensionMismatch, "weights matrix is empty or malformed");
    }
    if (strategy == FusionStrategy::Concat && primary.cols % 2 != 0) {
        fail(ErrorCode::DimensionMismatch, "concat weights need an even column count");
    }
    if (strategy == FusionStrategy::ScoreWeighted) {
        if (secondary.rows != primary.rows || secondary.cols != primary.cols ||
            secondary.data.size() != secondary.rows * secondary.cols) {
            fail(ErrorCode::DimensionMismatch, "E_f and E_o must have identical shapes");
        }
    }
    Lambda{lambda};
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.next_signed();
    return m;
}

FusionWeights generate_weights(FusionStrategy strategy, std::size_t class_count,
                               std::size_t feature_dim, std::uint64_t seed, double lambda) {
    if (class_count == 0 || feature_dim == 0) fail(ErrorCode::InvalidInput, "weights need positive dimensions");
    FusionWeights w;
    w.strategy = strategy;
    w.lambda = Lambda(lambda).value();
    const std::size_t cols = strategy == FusionStrategy::Concat ? 2 * feature_dim : feature_dim;
    SplitMix64 rng(seed);
    w.primary = Matrix(class_count, cols);
    for (auto& v : w.primary.data) v = rng.next_signed();
    if (strategy == FusionStrategy::ScoreWeighted) {
        w.secondary = Matrix(class_count, cols);
        for (auto& v : w.secondary.data) v = rng.next_signed();
    }
    return w;
}

std::vector<std::uint8_t> encode_weights(const FusionWeights& weights) {
    weights.validate();
    std::vector<std::uint8_t> out = {'F', 'W', 'T', '1'};
    put_u32(out, static_cast<std::uint32_t>(weights.primary.rows));
    put_u32(out, static_cast<std::uint32_t>(weights.primary.cols));
    out.push_back(static_cast<std::uint8_t>(weights.strategy));
    for (double v : weights.primary.data) put_f64(out, v);
    if (weights.strategy == FusionStrategy::ScoreWeighted) {
        for (double v : weights.secondary.data) put_f64(out, v);
    }
    put_f64(out, weights.lambda);
    return out;
}

FusionWeights decode_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "FWT1", 4) != 0) {
        fail(ErrorCode::InvalidInput, "missing FWT1 magic");
    }
    ByteReader in(bytes.subspan(4));
    FusionWeights w;
    const std::size_t rows = in.u32();
    const std::size_t cols = in.u32();
    const std::uint8_t tag = in.u8();
    if (tag > 2) fail(ErrorCode::InvalidInput, "unknown strategy tag " + std::to_string(tag));
    w.strategy = static_cast<FusionStrategy>(tag);
    w.primary = read_matrix(in, rows, cols);
    if (w.strategy == FusionStrategy::ScoreWeighted) w.secondary = read_matrix(in, rows, cols);
    w.lambda = in.f64();
    if (!in.at_end()) fail(ErrorCode::InvalidInput, "trailing bytes in weights file");
    w.validate();
    return w;
}

FusionWeights load_weights(const std::filesystem::path& path) { return decode_weights(read_file(path)); }

void save_weights(const std::filesystem::path& path, const FusionWeights& weights) {
    write_file(path, encode_weights(weights));
}

std::size_t raw_feature_length(std::size_t width, std::size_t height, std::size_t channels) {
    return std::min(kFeatureGrid, width) * std::min(kFeatureGrid, height) * channels;
}

std::vector<double> block_means(const ImageGrid& image) {
    if (image.empty() || !image.valid()) fail(ErrorCode::InvalidInput, "image must have at least one pixel");
    const std::size_t gx = std::min(kFeatureGrid, image.width);
    const std::size_t gy = std::min(kFeatureGrid, image.height);
    std::vector<double> raw;
    raw.reserve(gx * gy * image.channels);
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t by = 0; by < gy; ++by) {
            const std::size_t y0 = block_edge(by, image.height, gy);
            const std::size_t y1 = block_edge(by + 1, image.height, gy);
            for (std::size_t bx = 0; bx < gx; ++bx) {
                const std::size_t x0 = block_edge(bx, image.width, gx);
                const std::size_t x1 = block_edge(bx + 1, image.width, gx);
                double sum = 0.0;
                for (std::size_t y = y0; y < y1; ++y) {
                    for (std::size_t x = x0; x < x1; ++x) sum += image.at(x, y, c);
                }
                raw.push_back(sum / static_cast<double>((y1 - y0) * (x1 - x0)));
            }
        }
    }
    return raw;
}

Matrix projection_matrix(std::size_t dim, std::size_t raw_len) {
    return random_matrix(dim, raw_len, kProjectionSeed);
}

FeatureVector extract_features(const ImageGrid& image, std::size_t dim) {
    if (dim == 0) fail(ErrorCode::InvalidInput, "feature dimension must be positive");
    const std::vector<double> raw = block_means(image);
    if (!all_finite(raw)) fail(ErrorCode::InvalidInput, "image has non-finite samples");

    // Generate the projection row by row from the stream instead of
    // materialising the whole matrix; the entry order matches projection_matrix().
    SplitMix64 rng(kProjectionSeed);
    std::vector<double> out(dim);
    for (std::size_t r = 0; r < dim; ++r) {
        double acc = 0.0;
        for (double v : raw) acc += rng.next_signed() * v;
        out[r] = acc;
    }
    return FeatureVector(std::move(out));
}

FeatureVector concat_features(const FeatureVector& gf, const FeatureVector& go) {
    require_same_dim(gf.dim(), go.dim(), "concat_features");
    std::vector<double> out;
    out.reserve(2 * gf.dim());
    out.insert(out.end(), gf.values().begin(), gf.values().end());
    out.insert(out.end(), go.values().begin(), go.values().end());
    return FeatureVector(std::move(out));
}

ScoreVector linear_score(const Matrix& weights, const FeatureVector& g) {
    require_same_dim(weights.cols, g.dim(), "linear_score");
    std::vector<double> scores(weights.rows, 0.0);
    const auto x = g.values();
    for (std::size_t r = 0; r < weights.rows; ++r) {
        const double* row = weights.data.data() + r * weights.cols;
        double acc = 0.0;
        for (std::size_t k = 0; k < weights.cols; ++k) acc += row[k] * x[k];
        scores[r] = acc;
    }
    return ScoreVector(std::move(scores));
}

FeatureVector fuse_features_weighted(const FeatureVector& gf, const FeatureVector& go, Lambda lambda) {
    require_same_dim(gf.dim(), go.dim(), "fuse_features_weighted");
    const double l = lambda.value();
    std::vector<double> out(gf.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = l * gf[i] + (1.0 - l) * go[i];
    return FeatureVector(std::move(out));
}

ScoreVector fuse_scores_weighted(const ScoreVector& rf, const ScoreVector& ro, Lambda lambda) {
    require_same_dim(rf.size(), ro.size(), "fuse_scores_weighted");
    const double l = lambda.value();
    std::vector<double> out(rf.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = l * rf[i] + (1.0 - l) * ro[i];
    return ScoreVector(std::move(out));
}

std::vector<std::string> default_class_names() { return {"neovascular AMD", "PCV", "others"}; }

DiagnosisLabel classify(const ScoreVector& scores, std::span<const std::string> names) {
    if (scores.size() == 0) fail(ErrorCode::InvalidInput, "cannot classify an empty score vector");
    if (!names.empty() && names.size() < scores.size()) {
        fail(ErrorCode::InvalidInput, "fewer class names than scores");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    DiagnosisLabel label{best, {}};
    if (!names.empty()) {
        label.name = names[best];
    } else {
        static const auto defaults = default_class_names();
        label.name = best < defaults.size() ? defaults[best] : "class_" + std::to_string(best);
    }
    return label;
}

void ModalPair::validate() const {
    if (image_f.empty() || image_o.empty() || !image_f.valid() || !image_o.valid()) {
        fail(ErrorCode::InvalidInput, "both modality images must be non-empty");
    }
    if (image_f.width != image_o.width || image_f.height != image_o.height ||
        image_f.channels != image_o.channels) {
        fail(ErrorCode::DimensionMismatch, "modality images differ in shape");
    }
}

Diagnosis diagnose_features(const FeatureVector& gf, const FeatureVector& go,
                            const FusionWeights& weights, Lambda lambda,
                            std::span<const std::string> names) {
    weights.validate();
    ScoreVector scores;
    switch (weights.strategy) {
    case FusionStrategy::Concat:
        scores = linear_score(weights.primary, concat_features(gf, go));
        break;
    case FusionStrategy::FeatureWeighted:
        scores = linear_score(weights.primary, fuse_features_weighted(gf, go, lambda));
        break;
    case FusionStrategy::ScoreWeighted:
        scores = fuse_scores_weighted(linear_score(weights.primary, gf),
                                      linear_score(weights.secondary, go), lambda);
        break;
    }
    DiagnosisLabel label = classify(scores, names);
    return {std::move(label), std::move(scores)};
}

Diagnosis diagnose(const ModalPair& pair, const FusionWeights& weights, Lambda lambda,
                   std::span<const std::string> names) {
    pair.validate();
    weights.validate();
    const std::size_t dim = weights.feature_dim();
    return diagnose_features(extract_features(pair.image_f, dim), extract_features(pair.image_o, dim),
                             weights, lambda, names);
}

} // namespace segserve
