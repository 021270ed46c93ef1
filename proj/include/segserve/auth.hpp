#pragma once

#include "segserve/clock.hpp"
#include "segserve/store.hpp"

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace segserve {

struct AuthOptions {
    std::uint32_t hash_iterations = 100'000;
    std::chrono::milliseconds session_ttl = std::chrono::hours(24);
    std::chrono::milliseconds reset_ttl = std::chrono::minutes(15);
    std::size_t min_password_length = 8;
};

// PBKDF2-HMAC-SHA256, 32-byte output.
std::vector<std::uint8_t> hash_password(std::string_view password, std::span<const std::uint8_t> salt,
                                        std::uint32_t iterations);

class AuthService {
public:
    AuthService(Store& store, AuthOptions options = {}, Clock clock = system_clock());

    // Throws UsernameTaken, WeakPassword, InvalidInput (empty name).
    UserRecord register_user(std::string_view username, std::string_view password);

    // Same AuthFailed error whether the user is unknown or the password is wrong.
    SessionRecord authenticate(std::string_view username, std::string_view password);

    // Throws AuthFailed for unknown or expired tokens.
    UserId validate(std::string_view token);

    // Throws NotFound for unknown users.
    ResetRecord reset_password(std::string_view username);

    // Replaces the credentials and drops every session of the user.
    // Throws TokenInvalid for unknown, used or expired tokens.
    void redeem_reset(std::string_view token, std::string_view new_password);

    const AuthOptions& options() const noexcept { return options_; }

private:
    void check_password_strength(std::string_view password) const;

    Store& store_;
    AuthOptions options_;
    Clock clock_;
};

} // namespace segserve
