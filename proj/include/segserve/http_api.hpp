#pragma once

#include "segserve/auth.hpp"
#include "segserve/orchestrator.hpp"
#include "segserve/pipeline.hpp"

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

namespace segserve {

struct ApiOptions {
    std::filesystem::path data_root = "data";
    std::size_t max_upload_bytes = 64u << 20;
};

// HTTP/1.1 + JSON surface:
//   POST /api/register                 {username, password}  -> 201 {user_id}
//   POST /api/login                    {username, password}  -> 200 {token, expires_at}
//   POST /api/tasks                    multipart category, file -> 202 {task_id}
//   POST /api/diagnose                 multipart image_f, image_o, strategy, lambda -> 200
//   GET  /api/tasks                    -> 200 [ {task_id, category, submitted_at, state, safety} ]
//   GET  /api/tasks/{id}               -> 200 {task_id, ..., state, safety}
//   GET  /api/tasks/{id}/result        -> 200 mask bytes
//   POST /api/password-reset           {username}            -> 200 {reset_token, expires_at}
//   POST /api/password-reset/confirm   {token, new_password} -> 204
// Errors are {"error": code, "message": text}.
class ApiServer {
public:
    ApiServer(AuthService& auth, Orchestrator& orchestrator, WeightBank weights, ApiOptions options = {});
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Port 0 binds an ephemeral port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    bool listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace segserve
