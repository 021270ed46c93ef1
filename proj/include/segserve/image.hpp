#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace segserve {

// Row-major, channel-interleaved 2D raster: sample (x, y, c) lives at
// ((y * width) + x) * channels + c.
struct ImageGrid {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(std::size_t w, std::size_t h, std::size_t c, double fill = 0.0)
        : width(w), height(h), channels(c), data(w * h * c, fill) {}

    std::size_t pixel_count() const noexcept { return width * height; }
    bool empty() const noexcept { return width == 0 || height == 0 || channels == 0; }
    bool valid() const noexcept { return data.size() == width * height * channels; }

    double& at(std::size_t x, std::size_t y, std::size_t c = 0) {
        return data[(y * width + x) * channels + c];
    }
    double at(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return data[(y * width + x) * channels + c];
    }

    bool operator==(const ImageGrid&) const = default;
};

// Voxels x-fastest, then y, then z. Stored as f32 to match the MIV1 format.
struct Volume {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t depth = 0;
    std::vector<float> data;

    Volume() = default;
    Volume(std::size_t w, std::size_t h, std::size_t d, float fill = 0.0f)
        : width(w), height(h), depth(d), data(w * h * d, fill) {}

    bool valid() const noexcept { return data.size() == width * height * depth; }

    float& at(std::size_t x, std::size_t y, std::size_t z) {
        return data[(z * height + y) * width + x];
    }
    float at(std::size_t x, std::size_t y, std::size_t z) const {
        return data[(z * height + y) * width + x];
    }

    bool operator==(const Volume&) const = default;
};

// Per-pixel foreground probability, every value in [0, 1].
struct ProbabilityMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values;

    ProbabilityMap() = default;
    ProbabilityMap(std::size_t w, std::size_t h, double fill = 0.0)
        : width(w), height(h), values(w * h, fill) {}

    double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
    double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }

    bool valid() const noexcept { return values.size() == width * height; }
    bool in_unit_range() const noexcept;

    bool operator==(const ProbabilityMap&) const = default;
};

// Binary (or small label set) segmentation. depth == 1 for 2D masks.
struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t depth = 1;
    std::vector<std::uint8_t> labels;

    Mask() = default;
    Mask(std::size_t w, std::size_t h, std::size_t d = 1)
        : width(w), height(h), depth(d), labels(w * h * d, 0) {}

    std::uint8_t at(std::size_t x, std::size_t y, std::size_t z = 0) const {
        return labels[(z * height + y) * width + x];
    }

    bool operator==(const Mask&) const = default;
};

} // namespace segserve
