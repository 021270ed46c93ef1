#include "segserve/auth.hpp"

#include "segserve/error.hpp"
#include "segserve/random.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>

namespace segserve {

namespace {

constexpr std::size_t kSaltBytes = 16;
constexpr std::size_t kHashBytes = 32;

bool equal_hashes(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

} // namespace

std::vector<std::uint8_t> hash_password(std::string_view password, std::span<const std::uint8_t> salt,
                                        std::uint32_t iterations) {
    std::vector<std::uint8_t> out(kHashBytes);
    if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                          static_cast<int>(salt.size()), static_cast<int>(iterations), EVP_sha256(),
                          static_cast<int>(out.size()), out.data()) != 1) {
        throw std::runtime_error("PBKDF2 failed");
    }
    return out;
}

AuthService::AuthService(Store& store, AuthOptions options, Clock clock)
    : store_(store), options_(options), clock_(std::move(clock)) {
    if (options_.hash_iterations == 0) fail(ErrorCode::InvalidInput, "hash iterations must be positive");
}

void AuthService::check_password_strength(std::string_view password) const {
    if (password.size() < options_.min_password_length) {
        fail(ErrorCode::WeakPassword,
             "password must be at least " + std::to_string(options_.min_password_length) + " characters");
    }
}

UserRecord AuthService::register_user(std::string_view username, std::string_view password) {
    if (username.empty()) fail(ErrorCode::InvalidInput, "username must be non-empty");
    check_password_strength(password);
    if (store_.find_user_by_name(username)) {
        fail(ErrorCode::UsernameTaken, "username '" + std::string(username) + "' is taken");
    }
    UserRecord user;
    user.username = std::string(username);
    user.salt = secure_random(kSaltBytes);
    user.hash_iterations = options_.hash_iterations;
    user.password_hash = hash_password(password, user.salt, user.hash_iterations);
    user.created_at = clock_();
    return store_.insert_user(std::move(user));
}

SessionRecord AuthService::authenticate(std::string_view username, std::string_view password) {
    const auto user = store_.find_user_by_name(username);
    if (!user) {
        // Burn the same work as a real check so timing does not reveal
        // whether the name exists.
        static const std::vector<std::uint8_t> dummy_salt(kSaltBytes, 0);
        (void)hash_password(password, dummy_salt, options_.hash_iterations);
        fail(ErrorCode::AuthFailed, "invalid username or password");
    }
    if (!equal_hashes(hash_password(password, user->salt, user->hash_iterations), user->password_hash)) {
        fail(ErrorCode::AuthFailed, "invalid username or password");
    }
    SessionRecord session{random_token_hex(), user->user_id, clock_() + options_.session_ttl.count()};
    store_.put_session(session);
    return session;
}

UserId AuthService::validate(std::string_view token) {
    const auto session = store_.find_session(token);
    if (!session || clock_() >= session->expires_at) fail(ErrorCode::AuthFailed, "invalid or expired token");
    return session->user_id;
}

ResetRecord AuthService::reset_password(std::string_view username) {
    const auto user = store_.find_user_by_name(username);
    if (!user) fail(ErrorCode::NotFound, "unknown user '" + std::string(username) + "'");
    ResetRecord reset{random_token_hex(), user->user_id, clock_() + options_.reset_ttl.count(), false};
    store_.put_reset(reset);
    return reset;
}

void AuthService::redeem_reset(std::string_view token, std::string_view new_password) {
    check_password_strength(new_password);
    const auto reset = store_.take_reset(token);
    if (!reset || reset->used || clock_() >= reset->expires_at) {
        fail(ErrorCode::TokenInvalid, "reset token is unknown, used or expired");
    }
    auto salt = secure_random(kSaltBytes);
    auto hash = hash_password(new_password, salt, options_.hash_iterations);
    store_.update_password(reset->user_id, hash, salt, options_.hash_iterations);
    store_.delete_sessions_for_user(reset->user_id);
}

} // namespace segserve
