#include "segserve/segmentation.hpp"

#include "segserve/error.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace segserve {

bool ProbabilityMap::in_unit_range() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

std::vector<std::size_t> axis_anchors(std::size_t size, std::size_t window) {
    if (window == 0 || size == 0) fail(ErrorCode::InvalidInput, "window and image extents must be positive");
    if (window > size) {
        fail(ErrorCode::InvalidInput,
             "window " + std::to_string(window) + " exceeds image extent " + std::to_string(size));
    }
    const std::size_t stride = std::max<std::size_t>(1, window / 2);
    std::vector<std::size_t> anchors;
    for (std::size_t a = 0; a + window <= size; a += stride) anchors.push_back(a);
    if (anchors.back() + window < size) anchors.push_back(size - window);
    return anchors;
}

TilePlan plan_tiles(std::size_t image_w, std::size_t image_h, std::size_t window_w, std::size_t window_h) {
    TilePlan plan;
    plan.image = {image_w, image_h};
    plan.window = {window_w, window_h};
    const auto xs = axis_anchors(image_w, window_w);
    const auto ys = axis_anchors(image_h, window_h);
    plan.stride = {std::max<std::size_t>(1, window_w / 2), std::max<std::size_t>(1, window_h / 2)};

    plan.origins.reserve(xs.size() * ys.size());
    for (auto y : ys) {
        for (auto x : xs) plan.origins.push_back({x, y});
    }

    // Coverage is separable: count per axis, then multiply.
    std::vector<std::size_t> cx(image_w, 0), cy(image_h, 0);
    for (auto x : xs) {
        for (std::size_t i = x; i < x + window_w; ++i) ++cx[i];
    }
    for (auto y : ys) {
        for (std::size_t j = y; j < y + window_h; ++j) ++cy[j];
    }
    plan.coverage.resize(image_w * image_h);
    for (std::size_t y = 0; y < image_h; ++y) {
        for (std::size_t x = 0; x < image_w; ++x) plan.coverage[y * image_w + x] = cx[x] * cy[y];
    }
    return plan;
}

ImageGrid crop(const ImageGrid& image, Anchor origin, Extent size) {
    if (origin.x + size.width > image.width || origin.y + size.height > image.height) {
        fail(ErrorCode::InvalidInput, "crop rectangle outside image");
    }
    ImageGrid out(size.width, size.height, image.channels);
    const std::size_t row_len = size.width * image.channels;
    for (std::size_t y = 0; y < size.height; ++y) {
        const auto src = image.data.begin() +
                         static_cast<std::ptrdiff_t>(((origin.y + y) * image.width + origin.x) * image.channels);
        std::copy(src, src + static_cast<std::ptrdiff_t>(row_len),
                  out.data.begin() + static_cast<std::ptrdiff_t>(y * row_len));
    }
    return out;
}

ProbabilityMap segment_tiled(const ImageGrid& image, const Segmenter& segmenter, Extent window,
                             std::size_t threads) {
    if (image.empty() || !image.valid()) fail(ErrorCode::InvalidInput, "image must be non-empty");
    const TilePlan plan = plan_tiles(image.width, image.height, window.width, window.height);
    const std::size_t n = plan.origins.size();

    std::vector<ProbabilityMap> tiles(n);
    auto run_tile = [&](std::size_t t) {
        ProbabilityMap p = segmenter(crop(image, plan.origins[t], window));
        if (p.width != window.width || p.height != window.height || !p.valid()) {
            fail(ErrorCode::SegmenterContractViolation,
                 "segmenter returned " + std::to_string(p.width) + "x" + std::to_string(p.height) +
                     " for a " + std::to_string(window.width) + "x" + std::to_string(window.height) + " tile");
        }
        if (!p.in_unit_range()) fail(ErrorCode::SegmenterContractViolation, "segmenter output outside [0, 1]");
        tiles[t] = std::move(p);
    };

    threads = std::clamp<std::size_t>(threads, 1, n);
    if (threads == 1) {
        for (std::size_t t = 0; t < n; ++t) run_tile(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr error;
        std::mutex error_mutex;
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) {
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < n; t = next++) {
                    try {
                        run_tile(t);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
        pool.clear();
        if (error) std::rethrow_exception(error);
    }

    ProbabilityMap sum(image.width, image.height, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const Anchor o = plan.origins[t];
        const ProbabilityMap& tile = tiles[t];
        for (std::size_t y = 0; y < window.height; ++y) {
            for (std::size_t x = 0; x < window.width; ++x) sum.at(o.x + x, o.y + y) += tile.at(x, y);
        }
    }
    for (std::size_t i = 0; i < sum.values.size(); ++i) {
        sum.values[i] /= static_cast<double>(plan.coverage[i]);
    }
    return sum;
}

Mask threshold_mask(const ProbabilityMap& map, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) fail(ErrorCode::InvalidInput, "threshold must lie in [0, 1]");
    if (!map.valid()) fail(ErrorCode::InvalidInput, "malformed probability map");
    Mask mask(map.width, map.height);
    for (std::size_t i = 0; i < map.values.size(); ++i) mask.labels[i] = map.values[i] >= theta ? 1 : 0;
    return mask;
}

std::vector<ImageGrid> slice_volume(const Volume& volume) {
    if (!volume.valid()) fail(ErrorCode::InvalidInput, "malformed volume");
    std::vector<ImageGrid> slices;
    slices.reserve(volume.depth);
    const std::size_t plane = volume.width * volume.height;
    for (std::size_t z = 0; z < volume.depth; ++z) {
        ImageGrid s(volume.width, volume.height, 1);
        std::copy_n(volume.data.begin() + static_cast<std::ptrdiff_t>(z * plane), plane, s.data.begin());
        slices.push_back(std::move(s));
    }
    return slices;
}

Volume restack(std::span<const ImageGrid> slices) {
    if (slices.empty()) fail(ErrorCode::InvalidInput, "cannot restack zero slices");
    const std::size_t w = slices.front().width;
    const std::size_t h = slices.front().height;
    Volume v(w, h, slices.size());
    for (std::size_t z = 0; z < slices.size(); ++z) {
        const ImageGrid& s = slices[z];
        if (s.width != w || s.height != h || s.channels != 1 || !s.valid()) {
            fail(ErrorCode::DimensionMismatch, "slice " + std::to_string(z) + " differs in shape");
        }
        std::transform(s.data.begin(), s.data.end(),
                       v.data.begin() + static_cast<std::ptrdiff_t>(z * w * h),
                       [](double d) { return static_cast<float>(d); });
    }
    return v;
}

Mask restack(std::span<const Mask> slices) {
    if (slices.empty()) fail(ErrorCode::InvalidInput, "cannot restack zero slices");
    const std::size_t w = slices.front().width;
    const std::size_t h = slices.front().height;
    Mask m(w, h, slices.size());
    for (std::size_t z = 0; z < slices.size(); ++z) {
        const Mask& s = slices[z];
        if (s.width != w || s.height != h || s.depth != 1 || s.labels.size() != w * h) {
            fail(ErrorCode::DimensionMismatch, "slice " + std::to_string(z) + " differs in shape");
        }
        std::copy(s.labels.begin(), s.labels.end(), m.labels.begin() + static_cast<std::ptrdiff_t>(z * w * h));
    }
    return m;
}

ProbabilityMap multilevel_aggregate(std::span<const ProbabilityMap> stages) {
    if (stages.empty()) fail(ErrorCode::InvalidInput, "need at least one stage");
    const std::size_t w = stages[0].width;
    const std::size_t h = stages[0].height;
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const std::size_t wk = w >> k;
        const std::size_t hk = h >> k;
        if (wk == 0 || hk == 0 || stages[k].width != wk || stages[k].height != hk || !stages[k].valid()) {
            fail(ErrorCode::InvalidInput, "stage " + std::to_string(k) + " breaks the halving chain");
        }
        if (!stages[k].in_unit_range()) fail(ErrorCode::InvalidInput, "stage values must lie in [0, 1]");
    }
    ProbabilityMap out(w, h, 0.0);
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const ProbabilityMap& s = stages[k];
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t sy = std::min(y >> k, s.height - 1);
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t sx = std::min(x >> k, s.width - 1);
                out.at(x, y) += s.at(sx, sy);
            }
        }
    }
    const double count = static_cast<double>(stages.size());
    for (auto& v : out.values) v = std::min(1.0, v / count);
    return out;
}

ProbabilityMap reference_segmenter(const ImageGrid& image) {
    if (image.empty() || !image.valid()) fail(ErrorCode::InvalidInput, "image must be non-empty");
    const std::size_t w = image.width;
    const std::size_t h = image.height;

    std::vector<double> lum(w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < image.channels; ++c) s += image.data[i * image.channels + c];
        lum[i] = s / static_cast<double>(image.channels);
    }

    ProbabilityMap out(w, h);
    double peak = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                const std::size_t yy = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(y) + dy, 0,
                                                                  static_cast<std::ptrdiff_t>(h) - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const std::size_t xx = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(x) + dx, 0,
                                                                      static_cast<std::ptrdiff_t>(w) - 1);
                    s += lum[yy * w + xx];
                }
            }
            out.at(x, y) = s / 9.0;
            peak = std::max(peak, out.at(x, y));
        }
    }
    if (!(peak > 0.0)) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        return out;
    }
    for (auto& v : out.values) v = std::clamp(v / peak, 0.0, 1.0);
    return out;
}

Mask segment_image(const ImageGrid& image, const SegmentOptions& options) {
    if (image.empty() || !image.valid()) fail(ErrorCode::InvalidInput, "image must be non-empty");
    if (options.window.width == 0 || options.window.height == 0) {
        fail(ErrorCode::InvalidInput, "window must be positive");
    }
    const Extent window{std::min(options.window.width, image.width), std::min(options.window.height, image.height)};
    const ProbabilityMap p = segment_tiled(image, reference_segmenter, window, options.threads);
    return threshold_mask(p, options.theta);
}

Mask segment_volume(const Volume& volume, const SegmentOptions& options) {
    std::vector<Mask> masks;
    masks.reserve(volume.depth);
    for (const ImageGrid& slice : slice_volume(volume)) masks.push_back(segment_image(slice, options));
    return restack(masks);
}

SegmentationArtifact segment_bytes(std::span<const std::uint8_t> input, const SegmentOptions& options) {
    switch (sniff_format(input)) {
    case FileFormat::Png:
    case FileFormat::Pgm:
    case FileFormat::Ppm:
        return {encode_pgm(segment_image(decode_image(input), options)), FileFormat::Pgm};
    case FileFormat::Miv1:
        return {encode_miv1(segment_volume(decode_miv1(input), options)), FileFormat::Miv1};
    case FileFormat::Unknown:
        break;
    }
    fail(ErrorCode::UnsupportedFormat, "expected PNG, PGM, PPM or MIV1 input");
}

} // namespace segserve
