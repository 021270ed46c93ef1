#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace segserve {

// SplitMix64 (Steele, Lea, Flood 2014). Integer-exact, so streams are
// reproducible across platforms and languages.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Top 53 bits mapped to [0, 1).
    constexpr double next_unit() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform on [-1, 1).
    constexpr double next_signed() noexcept { return 2.0 * next_unit() - 1.0; }

private:
    std::uint64_t state_;
};

inline constexpr std::uint64_t kProjectionSeed = 0x5E6D5EEDULL;

// Cryptographically secure bytes from the OS/OpenSSL CSPRNG.
void secure_random(std::span<std::uint8_t> out);
std::vector<std::uint8_t> secure_random(std::size_t n);

std::string to_hex(std::span<const std::uint8_t> bytes);

// 128-bit random token rendered as 32 lowercase hex characters.
std::string random_token_hex();

// Random version-4 UUID in canonical 8-4-4-4-12 lowercase form.
std::string uuid_v4();

bool is_uuid(std::string_view s) noexcept;

} // namespace segserve
