#include "segserve/error.hpp"
#include "segserve/orchestrator.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <atomic>

using namespace segserve;
using namespace std::chrono_literals;
using testing_support::TempDir;

namespace {

template <typename F>
void expect_code(ErrorCode code, F&& f) {
    try {
        f();
        ADD_FAILURE() << "expected " << to_string(code);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
    }
}

Artifact echo_runner(const TaskRecord& t) { return {"out.bin", Bytes(t.input_ref.begin(), t.input_ref.end())}; }

class FailingResults : public ResultStore {
public:
    using ResultStore::ResultStore;
    bool fail_artifact = false;
    bool fail_sentinel = false;
    void write_artifact(std::string_view id, const Artifact& a) override {
        if (fail_artifact) fail(ErrorCode::PersistError, "disk full");
        ResultStore::write_artifact(id, a);
    }
    void write_sentinel(std::string_view id) override {
        if (fail_sentinel) fail(ErrorCode::PersistError, "disk full");
        ResultStore::write_sentinel(id);
    }
};

struct OrchestratorFixture : ::testing::Test {
    TempDir dir;
    SqliteStore store{dir / "o.db"};
    FailingResults results{dir.path()};
};

} // namespace

TEST_F(OrchestratorFixture, ManualStepsFollowLifecycle) {
    Orchestrator orch(store, results, echo_runner, {2, 1});
    std::vector<TaskEvent> events;
    orch.set_observer([&](const TaskEvent& e) { events.push_back(e); });
    const std::string a = orch.submit(1, TaskCategory::Kidney, "aaa");
    const std::string b = orch.submit(1, TaskCategory::Kidney, "bbb");
    const std::string c = orch.submit(1, TaskCategory::Kidney, "ccc");
    EXPECT_EQ(orch.waiting_size(), 3u);
    EXPECT_EQ(orch.assignment_step(), 2u);
    EXPECT_EQ(orch.execution_size(), 2u);
    EXPECT_EQ(orch.query_status(c).state, TaskState::Waiting);
    EXPECT_EQ(orch.assignment_step(), 0u);

    EXPECT_EQ(orch.run_next(), a);
    EXPECT_EQ(orch.query_status(a).state, TaskState::Done);
    EXPECT_EQ(orch.query_status(a).safety, SafetyTag::Safe);
    EXPECT_EQ(orch.read_result(a).bytes, (Bytes{'a', 'a', 'a'}));
    EXPECT_EQ(orch.assignment_step(), 1u);
    EXPECT_EQ(orch.run_next(), b);
    EXPECT_EQ(orch.run_next(), c);
    EXPECT_FALSE(orch.run_next());
    EXPECT_EQ(orch.peak_execution_size(), 2u);

    // Done is always reported before Safe, and Safe only on Done.
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (events[i].safety == SafetyTag::Safe) {
            EXPECT_EQ(events[i].state, TaskState::Done);
            ASSERT_GT(i, 0u);
        }
    }
    const auto persisted = store.load_task(a);
    EXPECT_EQ(persisted->state, TaskState::Done);
    EXPECT_EQ(persisted->safety, SafetyTag::Safe);
}

TEST_F(OrchestratorFixture, ResultNotReadyBeforeCompletion) {
    Orchestrator orch(store, results, echo_runner);
    const std::string id = orch.submit(1, TaskCategory::BrainTumor, "x");
    expect_code(ErrorCode::ResultNotReady, [&] { orch.read_result(id); });
    orch.assignment_step();
    orch.claim_next();
    expect_code(ErrorCode::ResultNotReady, [&] { orch.read_result(id); });
    expect_code(ErrorCode::NotFound, [&] { orch.read_result("00000000-0000-4000-8000-000000000000"); });
}

TEST_F(OrchestratorFixture, DoubleCompletionRejected) {
    Orchestrator orch(store, results, echo_runner);
    const std::string id = orch.submit(1, TaskCategory::BrainTumor, "x");
    orch.assignment_step();
    orch.claim_next();
    orch.complete(id, {"m.pgm", {1}});
    expect_code(ErrorCode::IllegalTransition, [&] { orch.complete(id, {"m.pgm", {2}}); });
    EXPECT_EQ(orch.read_result(id).bytes, Bytes{1});
}

TEST_F(OrchestratorFixture, CompleteRequiresRunning) {
    Orchestrator orch(store, results, echo_runner);
    const std::string id = orch.submit(1, TaskCategory::BrainTumor, "x");
    expect_code(ErrorCode::IllegalTransition, [&] { orch.complete(id, {"m.pgm", {1}}); });
}

TEST_F(OrchestratorFixture, ArtifactWriteFailureLeavesFailedUnsafe) {
    Orchestrator orch(store, results, echo_runner);
    const std::string id = orch.submit(1, TaskCategory::BrainTumor, "x");
    orch.assignment_step();
    orch.claim_next();
    results.fail_artifact = true;
    expect_code(ErrorCode::PersistError, [&] { orch.complete(id, {"m.pgm", {1}}); });
    const TaskRecord r = orch.query_status(id);
    EXPECT_EQ(r.state, TaskState::Failed);
    EXPECT_EQ(r.safety, SafetyTag::Unsafe);
    EXPECT_FALSE(r.error.empty());
    expect_code(ErrorCode::ResultNotReady, [&] { orch.read_result(id); });
}

TEST_F(OrchestratorFixture, SentinelFailureStaysUnsafe) {
    Orchestrator orch(store, results, echo_runner);
    const std::string id = orch.submit(1, TaskCategory::BrainTumor, "x");
    orch.assignment_step();
    orch.claim_next();
    results.fail_sentinel = true;
    expect_code(ErrorCode::PersistError, [&] { orch.complete(id, {"m.pgm", {1}}); });
    EXPECT_EQ(orch.query_status(id).safety, SafetyTag::Unsafe);
    expect_code(ErrorCode::ResultNotReady, [&] { orch.read_result(id); });
}

TEST_F(OrchestratorFixture, RunnerExceptionMarksFailed) {
    Orchestrator orch(store, results, [](const TaskRecord&) -> Artifact { throw std::runtime_error("bad input"); });
    const std::string id = orch.submit(1, TaskCategory::BrainTumor, "x");
    orch.assignment_step();
    orch.run_next();
    EXPECT_EQ(orch.query_status(id).state, TaskState::Failed);
    EXPECT_EQ(orch.query_status(id).error, "bad input");
}

TEST_F(OrchestratorFixture, RestartRecovery) {
    std::string waiting, queued, running, done;
    {
        Orchestrator orch(store, results, echo_runner, {1, 1});
        done = orch.submit(1, TaskCategory::Kidney, "d");
        orch.assignment_step();
        orch.run_next();
        running = orch.submit(1, TaskCategory::Kidney, "r");
        orch.assignment_step();
        orch.claim_next();
        queued = orch.submit(1, TaskCategory::Kidney, "q");
        orch.assignment_step();
        waiting = orch.submit(1, TaskCategory::Kidney, "w");
    }
    Orchestrator again(store, results, echo_runner, {1, 1});
    EXPECT_EQ(again.query_status(running).state, TaskState::Failed);
    EXPECT_EQ(again.query_status(done).safety, SafetyTag::Safe);
    EXPECT_EQ(again.execution_size(), 1u);
    EXPECT_EQ(again.waiting_size(), 1u);
    EXPECT_EQ(again.run_next(), queued);
    again.assignment_step();
    EXPECT_EQ(again.run_next(), waiting);
}

TEST_F(OrchestratorFixture, ThreadedRunDrainsAndRespectsCapacity) {
    Orchestrator orch(store, results, echo_runner, {3, 2});
    std::atomic<std::size_t> max_exec{0};
    orch.set_observer([&](const TaskEvent& e) {
        std::size_t prev = max_exec.load();
        while (e.execution_size > prev && !max_exec.compare_exchange_weak(prev, e.execution_size)) {
        }
    });
    orch.start();
    std::vector<std::string> ids;
    for (int i = 0; i < 50; ++i) ids.push_back(orch.submit(7, TaskCategory::KidneyTumor, std::to_string(i)));
    ASSERT_TRUE(orch.wait_idle(20s));
    orch.stop();
    EXPECT_LE(max_exec.load(), 3u);
    EXPECT_LE(orch.peak_execution_size(), 3u);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto r = orch.read_result(ids[i]);
        EXPECT_EQ(std::string(r.bytes.begin(), r.bytes.end()), std::to_string(i));
    }
    EXPECT_EQ(orch.list_tasks(7).size(), 50u);
}

TEST(ResultStore, RejectsPathsOutsideRoot) {
    TempDir dir;
    ResultStore rs(dir.path());
    EXPECT_THROW(rs.task_dir("../etc"), Error);
    const std::string id = "12345678-1234-4234-8234-123456789abc";
    EXPECT_THROW(rs.write_artifact(id, {"../x", {1}}), Error);
    rs.write_artifact(id, {"m.pgm", {1, 2}});
    EXPECT_FALSE(std::filesystem::exists(rs.task_dir(id) / "m.pgm.part"));
    EXPECT_EQ(rs.read_artifact(id, "m.pgm"), (Bytes{1, 2}));
    EXPECT_FALSE(rs.has_sentinel(id));
    rs.write_sentinel(id);
    EXPECT_TRUE(rs.has_sentinel(id));
}
