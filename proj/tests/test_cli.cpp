#include "segserve/fusion.hpp"
#include "segserve/image_io.hpp"
#include "segserve/pipeline.hpp"
#include "segserve/segmentation.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <random>
#include <sys/wait.h>

using namespace segserve;
using testing_support::TempDir;

namespace {

struct RunResult {
    int status = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string cmd = std::string(SEGSERVE_CLI) + " " + args + " 2>/dev/null";
    RunResult r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int st = ::pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

} // namespace

TEST(Cli, SegmentMatchesLibrary) {
    TempDir dir;
    std::mt19937_64 rng(1);
    const Bytes in = encode_png(testing_support::random_byte_image(rng, 50, 40, 3));
    write_file(dir / "in.png", in);
    const auto r = run("segment " + (dir / "in.png").string() + " " + (dir / "out.pgm").string() +
                       " --window 16x16 --theta 0.4");
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(read_file(dir / "out.pgm"), segment_bytes(in, SegmentOptions{{16, 16}, 0.4, 1}).bytes);
}

TEST(Cli, SegmentRejectsUnknownInput) {
    TempDir dir;
    write_file(dir / "bad.bin", Bytes{'x', 'y', 'z'});
    EXPECT_NE(run("segment " + (dir / "bad.bin").string() + " " + (dir / "o.pgm").string()).status, 0);
}

TEST(Cli, DiagnoseMatchesLibrary) {
    TempDir dir;
    std::mt19937_64 rng(2);
    const ImageGrid f = testing_support::random_byte_image(rng, 24, 24, 3);
    const ImageGrid o = testing_support::random_byte_image(rng, 24, 24, 3);
    write_file(dir / "f.png", encode_png(f));
    write_file(dir / "o.png", encode_png(o));
    const auto r = run("diagnose " + (dir / "f.png").string() + " " + (dir / "o.png").string() +
                       " --strategy concat --lambda 0.5");
    ASSERT_EQ(r.status, 0);
    const auto body = nlohmann::json::parse(r.out);
    const Diagnosis d = diagnose({f, o}, WeightBank::generated().get(FusionStrategy::Concat), Lambda(0.5));
    EXPECT_EQ(body["label_index"], d.label.index);
    EXPECT_DOUBLE_EQ(body["scores"][0].get<double>(), d.scores[0]);
}

TEST(Cli, GenWeightsRoundTrip) {
    TempDir dir;
    const auto r = run("gen-weights " + (dir / "w.fwt").string() +
                       " --strategy score_weighted --classes 3 --dim 8 --lambda 0.25 --seed 5");
    ASSERT_EQ(r.status, 0);
    const FusionWeights w = load_weights(dir / "w.fwt");
    EXPECT_EQ(w.strategy, FusionStrategy::ScoreWeighted);
    EXPECT_EQ(w.primary, generate_weights(FusionStrategy::ScoreWeighted, 3, 8, 5, 0.25).primary);
    EXPECT_EQ(w.lambda, 0.25);
}

TEST(Cli, Metrics) {
    TempDir dir;
    std::ofstream(dir / "s.csv") << "score,label\n0.9,1\n0.4,1\n0.6,0\n0.1,0\n";
    const auto r = run("metrics " + (dir / "s.csv").string());
    ASSERT_EQ(r.status, 0);
    const auto body = nlohmann::json::parse(r.out);
    EXPECT_EQ(body["n"], 4);
    EXPECT_DOUBLE_EQ(body["auroc"].get<double>(), 0.75);
    EXPECT_DOUBLE_EQ(body["recall"].get<double>(), 0.5);
    EXPECT_DOUBLE_EQ(body["accuracy"].get<double>(), 0.5);

    std::ofstream(dir / "bad.csv") << "score,label\nabc,1\n";
    EXPECT_NE(run("metrics " + (dir / "bad.csv").string()).status, 0);
}

TEST(Cli, ExportImport) {
    TempDir a, b;
    {
        SqliteStore store(a / "segserve.db");
        UserRecord u;
        u.username = "alice";
        u.password_hash = {1};
        u.salt = {2};
        u.hash_iterations = 3;
        store.insert_user(u);
    }
    ASSERT_EQ(run("export --data-root " + a.path().string() + " " + (a / "dump.jsonl").string()).status, 0);
    ASSERT_EQ(run("import --data-root " + b.path().string() + " " + (a / "dump.jsonl").string()).status, 0);
    SqliteStore imported(b / "segserve.db");
    EXPECT_TRUE(imported.find_user_by_name("alice"));
}
