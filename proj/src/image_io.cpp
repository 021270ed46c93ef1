#include "segserve/image_io.hpp"

#include "segserve/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace segserve {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
constexpr std::size_t kMaxDimension = 1u << 16;

std::uint8_t to_byte(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v));
}

// Whitespace- and comment-aware token reader for PNM headers.
class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t next_number() {
        skip_space_and_comments();
        std::size_t begin = pos_;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') ++pos_;
        if (begin == pos_ || pos_ - begin > 9) fail(ErrorCode::UnsupportedFormat, "malformed header number");
        std::size_t value = 0;
        for (std::size_t i = begin; i < pos_; ++i) value = value * 10 + (bytes_[i] - '0');
        return value;
    }

    // Exactly one whitespace byte separates the header from the payload.
    std::size_t payload_offset() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            fail(ErrorCode::UnsupportedFormat, "missing header terminator");
        }
        return pos_ + 1;
    }

    void skip(std::size_t n) { pos_ += n; }

private:
    static bool is_space(std::uint8_t c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    }

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void check_dims(std::size_t w, std::size_t h, std::size_t d = 1) {
    if (w == 0 || h == 0 || d == 0 || w > kMaxDimension || h > kMaxDimension || d > kMaxDimension) {
        fail(ErrorCode::UnsupportedFormat, "image dimensions out of range");
    }
}

void put_f32_le(Bytes& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

float get_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

Bytes miv1_header(std::size_t w, std::size_t h, std::size_t d) {
    const std::string header = "MIV1 " + std::to_string(w) + ' ' + std::to_string(h) + ' ' +
                               std::to_string(d) + '\n';
    return Bytes(header.begin(), header.end());
}

} // namespace

FileFormat sniff_format(std::span<const std::uint8_t> bytes) noexcept {
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) return FileFormat::Png;
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return FileFormat::Pgm;
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return FileFormat::Ppm;
    if (bytes.size() >= 5 && std::memcmp(bytes.data(), "MIV1 ", 5) == 0) return FileFormat::Miv1;
    return FileFormat::Unknown;
}

std::string_view extension_for(FileFormat format) noexcept {
    switch (format) {
    case FileFormat::Png: return ".png";
    case FileFormat::Pgm: return ".pgm";
    case FileFormat::Ppm: return ".ppm";
    case FileFormat::Miv1: return ".miv";
    case FileFormat::Unknown: break;
    }
    return ".bin";
}

ImageGrid decode_png(std::span<const std::uint8_t> bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        fail(ErrorCode::UnsupportedFormat, std::string("PNG decode failed: ") + image.message);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (image.width == 0 || image.height == 0 || image.width > kMaxDimension || image.height > kMaxDimension) {
        png_image_free(&image);
        fail(ErrorCode::UnsupportedFormat, "PNG dimensions out of range");
    }
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorCode::UnsupportedFormat, "PNG decode failed: " + msg);
    }
    ImageGrid out(image.width, image.height, color ? 3 : 1);
    std::copy(buffer.begin(), buffer.end(), out.data.begin());
    return out;
}

Bytes encode_png(const ImageGrid& img) {
    if (img.empty() || !img.valid() || (img.channels != 1 && img.channels != 3)) {
        fail(ErrorCode::InvalidInput, "PNG encode needs a valid 1- or 3-channel image");
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    std::vector<png_byte> pixels(img.data.size());
    std::transform(img.data.begin(), img.data.end(), pixels.begin(), to_byte);

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        fail(ErrorCode::InvalidInput, std::string("PNG encode failed: ") + image.message);
    }
    Bytes out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
        fail(ErrorCode::InvalidInput, std::string("PNG encode failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

ImageGrid decode_pnm(std::span<const std::uint8_t> bytes) {
    const FileFormat fmt = sniff_format(bytes);
    if (fmt != FileFormat::Pgm && fmt != FileFormat::Ppm) {
        fail(ErrorCode::UnsupportedFormat, "not a binary PGM/PPM");
    }
    HeaderReader reader(bytes);
    reader.skip(2);
    const std::size_t w = reader.next_number();
    const std::size_t h = reader.next_number();
    const std::size_t maxval = reader.next_number();
    check_dims(w, h);
    if (maxval == 0 || maxval > 255) fail(ErrorCode::UnsupportedFormat, "PNM maxval must be 1..255");
    const std::size_t offset = reader.payload_offset();
    const std::size_t channels = fmt == FileFormat::Ppm ? 3 : 1;
    const std::size_t n = w * h * channels;
    if (bytes.size() < offset || bytes.size() - offset < n) {
        fail(ErrorCode::UnsupportedFormat, "truncated PNM payload");
    }
    ImageGrid out(w, h, channels);
    for (std::size_t i = 0; i < n; ++i) out.data[i] = bytes[offset + i];
    return out;
}

Bytes encode_pgm(const ImageGrid& gray) {
    if (gray.empty() || !gray.valid() || gray.channels != 1) {
        fail(ErrorCode::InvalidInput, "PGM encode needs a valid single-channel image");
    }
    const std::string header = "P5\n" + std::to_string(gray.width) + ' ' + std::to_string(gray.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + gray.data.size());
    for (double v : gray.data) out.push_back(to_byte(v));
    return out;
}

Bytes encode_pgm(const Mask& mask) {
    if (mask.depth != 1 || mask.labels.size() != mask.width * mask.height) {
        fail(ErrorCode::InvalidInput, "PGM mask must be 2D");
    }
    const std::string header = "P5\n" + std::to_string(mask.width) + ' ' + std::to_string(mask.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + mask.labels.size());
    for (auto l : mask.labels) out.push_back(l ? 255 : 0);
    return out;
}

Volume decode_miv1(std::span<const std::uint8_t> bytes) {
    if (sniff_format(bytes) != FileFormat::Miv1) fail(ErrorCode::UnsupportedFormat, "missing MIV1 magic");
    const auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
    if (newline == bytes.end()) fail(ErrorCode::UnsupportedFormat, "MIV1 header not terminated");
    const std::string header(bytes.begin(), newline);

    std::size_t dims[3] = {0, 0, 0};
    const char* p = header.data() + 5;
    const char* end = header.data() + header.size();
    for (int i = 0; i < 3; ++i) {
        if (i > 0) {
            if (p == end || *p != ' ') fail(ErrorCode::UnsupportedFormat, "malformed MIV1 header");
            ++p;
        }
        auto [next, ec] = std::from_chars(p, end, dims[i]);
        if (ec != std::errc{} || next == p) fail(ErrorCode::UnsupportedFormat, "malformed MIV1 header");
        p = next;
    }
    if (p != end) fail(ErrorCode::UnsupportedFormat, "trailing data in MIV1 header");
    check_dims(dims[0], dims[1], dims[2]);

    const std::size_t offset = header.size() + 1;
    const std::size_t count = dims[0] * dims[1] * dims[2];
    if (bytes.size() - offset != count * 4) fail(ErrorCode::UnsupportedFormat, "MIV1 payload size mismatch");

    Volume v(dims[0], dims[1], dims[2]);
    for (std::size_t i = 0; i < count; ++i) v.data[i] = get_f32_le(bytes.data() + offset + 4 * i);
    return v;
}

Bytes encode_miv1(const Volume& volume) {
    if (!volume.valid() || volume.data.empty()) fail(ErrorCode::InvalidInput, "invalid volume");
    Bytes out = miv1_header(volume.width, volume.height, volume.depth);
    out.reserve(out.size() + 4 * volume.data.size());
    for (float v : volume.data) put_f32_le(out, v);
    return out;
}

Bytes encode_miv1(const Mask& mask) {
    if (mask.labels.size() != mask.width * mask.height * mask.depth || mask.labels.empty()) {
        fail(ErrorCode::InvalidInput, "invalid mask");
    }
    Bytes out = miv1_header(mask.width, mask.height, mask.depth);
    out.reserve(out.size() + 4 * mask.labels.size());
    for (auto l : mask.labels) put_f32_le(out, l ? 1.0f : 0.0f);
    return out;
}

ImageGrid decode_image(std::span<const std::uint8_t> bytes) {
    switch (sniff_format(bytes)) {
    case FileFormat::Png: return decode_png(bytes);
    case FileFormat::Pgm:
    case FileFormat::Ppm: return decode_pnm(bytes);
    default: break;
    }
    fail(ErrorCode::UnsupportedFormat, "expected PNG, PGM or PPM image");
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::NotFound, "cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::PersistError, "cannot write " + path.string());
}

} // namespace segserve
