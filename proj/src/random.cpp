#include "segserve/random.hpp"

#include "segserve/error.hpp"

#include <openssl/rand.h>

#include <string_view>

namespace segserve {

void secure_random(std::span<std::uint8_t> out) {
    if (out.empty()) return;
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
        throw std::runtime_error("RAND_bytes failed");
    }
}

std::vector<std::uint8_t> secure_random(std::size_t n) {
    std::vector<std::uint8_t> bytes(n);
    secure_random(bytes);
    return bytes;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

std::string random_token_hex() {
    std::array<std::uint8_t, 16> raw{};
    secure_random(raw);
    return to_hex(raw);
}

std::string uuid_v4() {
    std::array<std::uint8_t, 16> raw{};
    secure_random(raw);
    raw[6] = static_cast<std::uint8_t>((raw[6] & 0x0F) | 0x40);
    raw[8] = static_cast<std::uint8_t>((raw[8] & 0x3F) | 0x80);
    const std::string hex = to_hex(raw);
    return hex.substr(0, 8) + '-' + hex.substr(8, 4) + '-' + hex.substr(12, 4) + '-' +
           hex.substr(16, 4) + '-' + hex.substr(20, 12);
}

bool is_uuid(std::string_view s) noexcept {
    if (s.size() != 36) return false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (i == 8 || i == 13 || i == 18 || i == 23) {
            if (c != '-') return false;
        } else if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
            return false;
        }
    }
    return true;
}

} // namespace segserve
