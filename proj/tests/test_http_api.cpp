#include "http_harness.hpp"
#include "test_support.hpp"

#include "segserve/image_io.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <random>

using namespace segserve;
using nlohmann::json;
using testing_support::LiveServer;
using testing_support::TempDir;

namespace {

httplib::MultipartFormDataItems upload(const std::string& category, const Bytes& bytes) {
    return {{"category", category, "", ""}, {"file", std::string(bytes.begin(), bytes.end()), "in.bin", "application/octet-stream"}};
}

json wait_done(httplib::Client& c, const httplib::Headers& h, const std::string& id) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
    json body;
    while (std::chrono::steady_clock::now() < deadline) {
        auto res = c.Get("/api/tasks/" + id, h);
        body = json::parse(res->body);
        if (body.value("result_ready", false) || body["state"] == "Failed") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return body;
}

Bytes sample_pgm() {
    std::mt19937_64 rng(1);
    return encode_pgm(testing_support::random_byte_image(rng, 40, 30, 1));
}

} // namespace

TEST(HttpApi, RegisterLoginAndErrors) {
    TempDir dir;
    LiveServer srv(dir.path());
    auto c = srv.client();
    const json creds = {{"username", "alice"}, {"password", "long enough pw"}};
    auto r = c.Post("/api/register", creds.dump(), "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 201);
    r = c.Post("/api/register", creds.dump(), "application/json");
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(json::parse(r->body)["error"], "UsernameTaken");
    r = c.Post("/api/register", json{{"username", "bob"}, {"password", "short"}}.dump(), "application/json");
    EXPECT_EQ(r->status, 400);
    r = c.Post("/api/register", "not json", "application/json");
    EXPECT_EQ(r->status, 400);

    r = c.Post("/api/login", json{{"username", "alice"}, {"password", "wrong one!"}}.dump(), "application/json");
    EXPECT_EQ(r->status, 401);
    r = c.Post("/api/login", creds.dump(), "application/json");
    EXPECT_EQ(r->status, 200);
    const json body = json::parse(r->body);
    EXPECT_EQ(body["token"].get<std::string>().size(), 32u);
    EXPECT_TRUE(body["expires_at"].get<std::string>().ends_with("Z"));

    r = c.Get("/api/tasks");
    EXPECT_EQ(r->status, 401);
    r = c.Get("/api/nothing-here");
    EXPECT_EQ(r->status, 404);
    EXPECT_EQ(json::parse(r->body)["error"], "NotFound");
}

TEST(HttpApi, SegmentationTaskLifecycle) {
    TempDir dir;
    LiveServer srv(dir.path(), SegmentOptions{{16, 16}, 0.5, 1});
    auto h = srv.login("alice");
    auto c = srv.client();
    const Bytes input = sample_pgm();
    auto r = c.Post("/api/tasks", h, upload("kidney", input));
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 202) << r->body;
    const std::string id = json::parse(r->body)["task_id"];

    const json status = wait_done(c, h, id);
    EXPECT_EQ(status["state"], "Done");
    EXPECT_EQ(status["safety"], "Safe");
    EXPECT_EQ(status["category"], "kidney");

    r = c.Get("/api/tasks/" + id + "/result", h);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/x-portable-graymap");
    const Bytes expected = segment_bytes(input, SegmentOptions{{16, 16}, 0.5, 1}).bytes;
    EXPECT_EQ(r->body, std::string(expected.begin(), expected.end()));

    r = c.Get("/api/tasks", h);
    const json list = json::parse(r->body);
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0]["task_id"], id);
}

TEST(HttpApi, OwnershipAndValidation) {
    TempDir dir;
    LiveServer srv(dir.path());
    auto alice = srv.login("alice");
    auto bob = srv.login("bob");
    auto c = srv.client();
    auto r = c.Post("/api/tasks", alice, upload("brain_tumor", sample_pgm()));
    const std::string id = json::parse(r->body)["task_id"];
    EXPECT_EQ(c.Get("/api/tasks/" + id, bob)->status, 403);
    EXPECT_EQ(c.Get("/api/tasks/" + id + "/result", bob)->status, 403);
    EXPECT_EQ(c.Get("/api/tasks/00000000-0000-4000-8000-000000000000", alice)->status, 404);
    EXPECT_EQ(json::parse(c.Get("/api/tasks", bob)->body).size(), 0u);

    r = c.Post("/api/tasks", alice, upload("liver", sample_pgm()));
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(json::parse(r->body)["error"], "InvalidCategory");
    r = c.Post("/api/tasks", alice, upload("dual_modal", sample_pgm()));
    EXPECT_EQ(r->status, 400);
    r = c.Post("/api/tasks", alice, upload("kidney", Bytes{'G', 'I', 'F', '8'}));
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(json::parse(r->body)["error"], "UnsupportedFormat");
}

TEST(HttpApi, UploadLimit) {
    TempDir dir;
    LiveServer srv(dir.path(), {}, {4, 1}, 1024);
    auto h = srv.login("alice");
    auto c = srv.client();
    Bytes big(4096, 0);
    auto r = c.Post("/api/tasks", h, upload("kidney", big));
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 413);
}

TEST(HttpApi, PasswordResetFlow) {
    TempDir dir;
    LiveServer srv(dir.path());
    auto h = srv.login("alice");
    auto c = srv.client();
    auto r = c.Post("/api/password-reset", json{{"username", "alice"}}.dump(), "application/json");
    ASSERT_EQ(r->status, 200);
    const std::string token = json::parse(r->body)["reset_token"];
    r = c.Post("/api/password-reset/confirm", json{{"token", token}, {"new_password", "brand new pw"}}.dump(),
               "application/json");
    EXPECT_EQ(r->status, 204);
    EXPECT_EQ(c.Get("/api/tasks", h)->status, 401);
    r = c.Post("/api/password-reset/confirm", json{{"token", token}, {"new_password", "brand new pw"}}.dump(),
               "application/json");
    EXPECT_EQ(r->status, 400);
    r = c.Post("/api/login", json{{"username", "alice"}, {"password", "brand new pw"}}.dump(), "application/json");
    EXPECT_EQ(r->status, 200);
    r = c.Post("/api/password-reset", json{{"username", "ghost"}}.dump(), "application/json");
    EXPECT_EQ(r->status, 404);
}

TEST(HttpApi, Diagnose) {
    TempDir dir;
    LiveServer srv(dir.path());
    auto h = srv.login("alice");
    auto c = srv.client();
    std::mt19937_64 rng(3);
    const ImageGrid f = testing_support::random_byte_image(rng, 32, 32, 3);
    const ImageGrid o = testing_support::random_byte_image(rng, 32, 32, 3);
    const Bytes fb = encode_png(f), ob = encode_png(o);
    httplib::MultipartFormDataItems items = {
        {"image_f", std::string(fb.begin(), fb.end()), "f.png", "image/png"},
        {"image_o", std::string(ob.begin(), ob.end()), "o.png", "image/png"},
        {"strategy", "score_weighted", "", ""},
        {"lambda", "0.3", "", ""}};
    auto r = c.Post("/api/diagnose", h, items);
    ASSERT_EQ(r->status, 200) << r->body;
    const json body = json::parse(r->body);
    const Diagnosis d = diagnose({f, o}, LiveServer::weights().get(FusionStrategy::ScoreWeighted), Lambda(0.3));
    EXPECT_EQ(body["label_index"], d.label.index);
    EXPECT_EQ(body["label"], d.label.name);
    EXPECT_EQ(body["strategy"], "score_weighted");
    ASSERT_EQ(body["scores"].size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(body["scores"][i].get<double>(), d.scores[i]);

    items[3].content = "1.5";
    EXPECT_EQ(c.Post("/api/diagnose", h, items)->status, 400);
    EXPECT_EQ(c.Post("/api/diagnose", items)->status, 401);
}
