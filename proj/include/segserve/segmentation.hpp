#pragma once

#include "segserve/image.hpp"
#include "segserve/image_io.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace segserve {

struct Extent {
    std::size_t width = 0;
    std::size_t height = 0;

    bool operator==(const Extent&) const = default;
};

struct Anchor {
    std::size_t x = 0;
    std::size_t y = 0;

    bool operator==(const Anchor&) const = default;
};

// Half-stride window placement. Anchors advance by max(1, window/2) per axis;
// if the regular grid stops short of the border, one more anchor is added,
// clamped so its window ends exactly at the image edge.
struct TilePlan {
    Extent image;
    Extent window;
    Extent stride;
    std::vector<Anchor> origins; // row-major: y outer, x inner
    std::vector<std::size_t> coverage; // per-pixel window count

    std::size_t coverage_at(std::size_t x, std::size_t y) const { return coverage[y * image.width + x]; }
};

// Anchors along one axis.
std::vector<std::size_t> axis_anchors(std::size_t size, std::size_t window);

TilePlan plan_tiles(std::size_t image_w, std::size_t image_h, std::size_t window_w, std::size_t window_h);

using Segmenter = std::function<ProbabilityMap(const ImageGrid&)>;

ImageGrid crop(const ImageGrid& image, Anchor origin, Extent size);

// Runs `segmenter` on every window and averages overlapping predictions.
// Accumulation order is the plan's row-major anchor order regardless of
// `threads`, so the output is bit-reproducible.
ProbabilityMap segment_tiled(const ImageGrid& image, const Segmenter& segmenter, Extent window,
                             std::size_t threads = 1);

Mask threshold_mask(const ProbabilityMap& map, double theta);

std::vector<ImageGrid> slice_volume(const Volume& volume);
Volume restack(std::span<const ImageGrid> slices);
Mask restack(std::span<const Mask> slices);

// Stage k has extent (W >> k, H >> k) with floor halving. Each stage is
// nearest-neighbour upsampled to stage 0 and the stages are averaged.
ProbabilityMap multilevel_aggregate(std::span<const ProbabilityMap> stages);

// Deterministic stand-in segmenter: channel-mean luminance, 3x3 box blur with
// clamped edges, then division by the global maximum (all zeros when the
// maximum is not positive).
ProbabilityMap reference_segmenter(const ImageGrid& image);

struct SegmentOptions {
    Extent window{128, 128}; // clamped to the image per axis
    double theta = 0.5;
    std::size_t threads = 1;
};

// 2D image -> stitched probability map -> mask.
Mask segment_image(const ImageGrid& image, const SegmentOptions& options);
// Slice, segment each slice in z order, restack.
Mask segment_volume(const Volume& volume, const SegmentOptions& options);

// Whole file pipeline shared by the CLI and the task workers: PNG/PGM/PPM in,
// PGM mask out; MIV1 in, MIV1 mask out.
struct SegmentationArtifact {
    Bytes bytes;
    FileFormat format = FileFormat::Pgm;
};
SegmentationArtifact segment_bytes(std::span<const std::uint8_t> input, const SegmentOptions& options);

} // namespace segserve
