#include "segserve/http_api.hpp"

#include "segserve/error.hpp"
#include "segserve/random.hpp"

#include <httplib.h>
#include <json.hpp>

#include <charconv>
#include <optional>

namespace segserve {

namespace {

using nlohmann::json;

int status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidInput:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::DegenerateLabels:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::InvalidCategory:
    case ErrorCode::WeakPassword:
    case ErrorCode::TokenInvalid: return 400;
    case ErrorCode::AuthFailed: return 401;
    case ErrorCode::Forbidden: return 403;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::UsernameTaken:
    case ErrorCode::ResultNotReady:
    case ErrorCode::IllegalTransition: return 409;
    case ErrorCode::PersistError:
    case ErrorCode::SegmenterContractViolation: return 500;
    }
    return 500;
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", code}, {"message", message}}.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    send_error(res, status_for(e.code()), to_string(e.code()), e.what());
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) fail(ErrorCode::InvalidInput, "request body must be a JSON object");
    return body;
}

std::string string_field(const json& body, const char* name) {
    auto it = body.find(name);
    if (it == body.end() || !it->is_string()) {
        fail(ErrorCode::InvalidInput, std::string("missing string field '") + name + "'");
    }
    return it->get<std::string>();
}

std::optional<std::string> form_value(const httplib::Request& req, const char* name) {
    if (!req.has_file(name)) return std::nullopt;
    return req.get_file_value(name).content;
}

std::span<const std::uint8_t> as_bytes(const std::string& s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

json task_summary(const TaskRecord& t) {
    return {{"task_id", t.id},
            {"category", to_string(t.category)},
            {"submitted_at", format_utc(t.submitted_at)},
            {"state", to_string(t.state)},
            {"safety", to_string(t.safety)}};
}

std::string_view content_type_for(std::string_view artifact_name) {
    if (artifact_name.ends_with(".pgm")) return "image/x-portable-graymap";
    if (artifact_name.ends_with(".json")) return "application/json";
    return "application/octet-stream";
}

} // namespace

struct ApiServer::Impl {
    AuthService& auth;
    Orchestrator& orchestrator;
    WeightBank weights;
    ApiOptions options;
    httplib::Server server;

    Impl(AuthService& a, Orchestrator& o, WeightBank w, ApiOptions opts)
        : auth(a), orchestrator(o), weights(std::move(w)), options(std::move(opts)) {
        std::filesystem::create_directories(options.data_root / "inputs");
        routes();
    }

    // Wraps a handler with uniform error translation.
    template <typename F>
    httplib::Server::Handler guarded(F&& f) {
        return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_error(res, e);
            } catch (const json::exception& e) {
                send_error(res, 400, "InvalidInput", e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "Internal", e.what());
            }
        };
    }

    UserId require_user(const httplib::Request& req) {
        const std::string header = req.get_header_value("Authorization");
        constexpr std::string_view prefix = "Bearer ";
        if (!header.starts_with(prefix)) fail(ErrorCode::AuthFailed, "missing bearer token");
        return auth.validate(std::string_view(header).substr(prefix.size()));
    }

    TaskRecord owned_task(const httplib::Request& req, UserId user) {
        const std::string id = req.matches[1];
        const TaskRecord t = orchestrator.query_status(id);
        if (t.owner != user) fail(ErrorCode::Forbidden, "task belongs to another user");
        return t;
    }

    void routes() {
        server.set_payload_max_length(options.max_upload_bytes);
        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            switch (res.status) {
            case 404: send_error(res, 404, "NotFound", "no such route"); break;
            case 413: send_error(res, 413, "PayloadTooLarge", "upload exceeds the size limit"); break;
            case 400: send_error(res, 400, "InvalidInput", "malformed request"); break;
            default: send_error(res, res.status, "Internal", "request failed"); break;
            }
        });

        server.Post("/api/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const UserRecord u = auth.register_user(string_field(body, "username"), string_field(body, "password"));
            send_json(res, 201, {{"user_id", u.user_id}});
        }));

        server.Post("/api/login", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const SessionRecord s = auth.authenticate(string_field(body, "username"), string_field(body, "password"));
            send_json(res, 200, {{"token", s.token}, {"expires_at", format_utc(s.expires_at)}});
        }));

        server.Post("/api/password-reset", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const ResetRecord r = auth.reset_password(string_field(body, "username"));
            send_json(res, 200, {{"reset_token", r.token}, {"expires_at", format_utc(r.expires_at)}});
        }));

        server.Post("/api/password-reset/confirm",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        const json body = parse_body(req);
                        auth.redeem_reset(string_field(body, "token"), string_field(body, "new_password"));
                        res.status = 204;
                    }));

        server.Post("/api/tasks", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const UserId user = require_user(req);
            const auto category_name = form_value(req, "category");
            if (!category_name) fail(ErrorCode::InvalidCategory, "missing category");
            const TaskCategory category = parse_category(*category_name);
            if (!is_segmentation(category)) fail(ErrorCode::InvalidCategory, "category must be a segmentation target");
            if (!req.has_file("file")) fail(ErrorCode::UnsupportedFormat, "missing file part");
            const std::string& content = req.get_file_value("file").content;
            const FileFormat format = sniff_format(as_bytes(content));
            if (format == FileFormat::Unknown) {
                fail(ErrorCode::UnsupportedFormat, "file must be PNG, PGM, PPM or MIV1");
            }
            const auto path = options.data_root / "inputs" / (uuid_v4() + std::string(extension_for(format)));
            write_file(path, as_bytes(content));
            const std::string id = orchestrator.submit(user, category, path.string());
            send_json(res, 202, {{"task_id", id}});
        }));

        server.Get("/api/tasks", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const UserId user = require_user(req);
            json list = json::array();
            for (const TaskRecord& t : orchestrator.list_tasks(user)) list.push_back(task_summary(t));
            send_json(res, 200, list);
        }));

        server.Get(R"(/api/tasks/([0-9a-f-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const UserId user = require_user(req);
            const TaskRecord t = owned_task(req, user);
            json body = task_summary(t);
            body["result_ready"] = t.state == TaskState::Done && t.safety == SafetyTag::Safe;
            if (!t.error.empty()) body["error_message"] = t.error;
            send_json(res, 200, body);
        }));

        server.Get(R"(/api/tasks/([0-9a-f-]+)/result)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const UserId user = require_user(req);
                       const TaskRecord t = owned_task(req, user);
                       ResultFile file = orchestrator.read_result(t.id);
                       res.status = 200;
                       res.set_header("Content-Disposition", "attachment; filename=\"" + file.name + "\"");
                       res.set_content(std::string(file.bytes.begin(), file.bytes.end()),
                                       std::string(content_type_for(file.name)));
                   }));

        server.Post("/api/diagnose", guarded([this](const httplib::Request& req, httplib::Response& res) {
            require_user(req);
            if (!req.has_file("image_f") || !req.has_file("image_o")) {
                fail(ErrorCode::InvalidInput, "image_f and image_o are required");
            }
            const FusionStrategy strategy =
                parse_strategy(form_value(req, "strategy").value_or("feature_weighted"));
            const FusionWeights& w = weights.get(strategy);
            double lambda = w.lambda;
            if (auto text = form_value(req, "lambda")) {
                const char* first = text->data();
                const char* last = first + text->size();
                auto [ptr, ec] = std::from_chars(first, last, lambda);
                if (ec != std::errc{} || ptr != last) fail(ErrorCode::InvalidInput, "lambda must be a number");
            }
            ModalPair pair{decode_image(as_bytes(req.get_file_value("image_f").content)),
                           decode_image(as_bytes(req.get_file_value("image_o").content))};
            const Diagnosis d = diagnose(pair, w, Lambda(lambda), weights.class_names);
            send_json(res, 200,
                      {{"label", d.label.name},
                       {"label_index", d.label.index},
                       {"scores", std::vector<double>(d.scores.scores().begin(), d.scores.scores().end())},
                       {"strategy", to_string(strategy)},
                       {"lambda", lambda}});
        }));
    }
};

ApiServer::ApiServer(AuthService& auth, Orchestrator& orchestrator, WeightBank weights, ApiOptions options)
    : impl_(std::make_unique<Impl>(auth, orchestrator, std::move(weights), std::move(options))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool ApiServer::listen() { return impl_->server.listen_after_bind(); }

void ApiServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void ApiServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

} // namespace segserve
