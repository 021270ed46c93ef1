#pragma once

#include "segserve/image.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace segserve {

using Bytes = std::vector<std::uint8_t>;

enum class FileFormat { Png, Pgm, Ppm, Miv1, Unknown };

// Format detection by magic bytes only; the payload is not validated.
FileFormat sniff_format(std::span<const std::uint8_t> bytes) noexcept;
std::string_view extension_for(FileFormat format) noexcept;

// 8-bit gray or RGB PNG (alpha dropped, 16-bit reduced to 8). Samples keep
// their 0..255 values. Throws Error(UnsupportedFormat) on malformed input.
ImageGrid decode_png(std::span<const std::uint8_t> bytes);
// Encodes 1- or 3-channel images; samples are clamped to 0..255 and rounded.
Bytes encode_png(const ImageGrid& image);

// Binary P5 (gray) or P6 (RGB), maxval <= 255.
ImageGrid decode_pnm(std::span<const std::uint8_t> bytes);
Bytes encode_pgm(const ImageGrid& gray);
// Mask labels written as 0/255.
Bytes encode_pgm(const Mask& mask);

// Header "MIV1 <w> <h> <d>\n" followed by w*h*d little-endian f32 voxels.
Volume decode_miv1(std::span<const std::uint8_t> bytes);
Bytes encode_miv1(const Volume& volume);
// 3D masks as MIV1 with voxels 0.0 / 1.0.
Bytes encode_miv1(const Mask& mask);

// PNG, PGM or PPM, dispatched by magic bytes.
ImageGrid decode_image(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace segserve
