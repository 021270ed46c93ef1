#include "segserve/error.hpp"
#include "segserve/store.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sqlite3.h>

#include <sstream>

using namespace segserve;
using testing_support::TempDir;

namespace {

UserRecord user(std::string name) {
    UserRecord u;
    u.username = std::move(name);
    u.password_hash = {1, 2, 3, 4};
    u.salt = {9, 8, 7};
    u.hash_iterations = 1000;
    u.created_at = 1'700'000'000'000;
    return u;
}

TaskRecord task(std::string id, UserId owner, TimestampMs at) {
    TaskRecord t;
    t.id = std::move(id);
    t.owner = owner;
    t.category = TaskCategory::Kidney;
    t.submitted_at = at;
    t.input_ref = "inputs/x.png";
    return t;
}

} // namespace

TEST(Enums, NamesRoundTrip) {
    for (auto c : {TaskCategory::BrainTumor, TaskCategory::Kidney, TaskCategory::KidneyTumor, TaskCategory::DualModal})
        EXPECT_EQ(parse_category(to_string(c)), c);
    EXPECT_EQ(to_string(TaskCategory::KidneyTumor), "kidney_tumor");
    for (auto s : {TaskState::Waiting, TaskState::Queued, TaskState::Running, TaskState::Done, TaskState::Failed})
        EXPECT_EQ(parse_state(to_string(s)), s);
    EXPECT_EQ(parse_safety("Safe"), SafetyTag::Safe);
    EXPECT_THROW(parse_category("liver"), Error);
    EXPECT_FALSE(is_segmentation(TaskCategory::DualModal));
}

TEST(Enums, TransitionTable) {
    EXPECT_TRUE(is_legal_transition(TaskState::Waiting, TaskState::Queued));
    EXPECT_TRUE(is_legal_transition(TaskState::Queued, TaskState::Running));
    EXPECT_TRUE(is_legal_transition(TaskState::Running, TaskState::Done));
    EXPECT_TRUE(is_legal_transition(TaskState::Running, TaskState::Failed));
    EXPECT_FALSE(is_legal_transition(TaskState::Waiting, TaskState::Running));
    EXPECT_FALSE(is_legal_transition(TaskState::Done, TaskState::Running));
    EXPECT_FALSE(is_legal_transition(TaskState::Failed, TaskState::Done));
}

TEST(SqliteStore, UsersAndUniqueness) {
    TempDir dir;
    SqliteStore store(dir / "s.db");
    const UserRecord a = store.insert_user(user("alice"));
    EXPECT_GT(a.user_id, 0);
    EXPECT_EQ(store.find_user(a.user_id), a);
    EXPECT_EQ(store.find_user_by_name("alice"), a);
    EXPECT_FALSE(store.find_user_by_name("bob"));
    try {
        store.insert_user(user("alice"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UsernameTaken);
    }
    store.update_password(a.user_id, {5, 5}, {6}, 7);
    const auto updated = store.find_user(a.user_id);
    EXPECT_EQ(updated->password_hash, (std::vector<std::uint8_t>{5, 5}));
    EXPECT_EQ(updated->hash_iterations, 7u);
}

TEST(SqliteStore, SessionsAndResets) {
    TempDir dir;
    SqliteStore store(dir / "s.db");
    const UserRecord a = store.insert_user(user("alice"));
    store.put_session({"tok1", a.user_id, 100});
    store.put_session({"tok2", a.user_id, 200});
    EXPECT_EQ(store.find_session("tok1")->expires_at, 100);
    store.delete_sessions_for_user(a.user_id);
    EXPECT_FALSE(store.find_session("tok1"));
    EXPECT_FALSE(store.find_session("tok2"));

    store.put_reset({"r1", a.user_id, 500, false});
    const auto first = store.take_reset("r1");
    ASSERT_TRUE(first);
    EXPECT_FALSE(first->used);
    const auto second = store.take_reset("r1");
    ASSERT_TRUE(second);
    EXPECT_TRUE(second->used);
    EXPECT_FALSE(store.take_reset("nope"));
}

TEST(SqliteStore, TasksOrderingAndUpdate) {
    TempDir dir;
    SqliteStore store(dir / "s.db");
    const auto t1 = store.persist_task(task("a", 1, 10));
    const auto t2 = store.persist_task(task("b", 1, 30));
    const auto t3 = store.persist_task(task("c", 1, 30));
    store.persist_task(task("d", 2, 20));
    EXPECT_LT(t1.seq, t2.seq);
    const auto listed = store.list_tasks(1);
    ASSERT_EQ(listed.size(), 3u);
    EXPECT_EQ(listed[0].id, "c");
    EXPECT_EQ(listed[1].id, "b");
    EXPECT_EQ(listed[2].id, "a");
    EXPECT_EQ(store.all_tasks().size(), 4u);
    EXPECT_THROW(store.persist_task(task("a", 1, 1)), Error);

    TaskRecord changed = t3;
    changed.state = TaskState::Failed;
    changed.error = "boom";
    store.update_task(changed);
    EXPECT_EQ(store.load_task("c"), changed);
    try {
        store.update_task(task("zzz", 1, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
    }
}

TEST(SqliteStore, SurvivesReopen) {
    TempDir dir;
    UserRecord a;
    {
        SqliteStore store(dir / "s.db");
        a = store.insert_user(user("alice"));
        store.persist_task(task("a", a.user_id, 10));
    }
    SqliteStore again(dir / "s.db");
    EXPECT_EQ(again.find_user(a.user_id), a);
    EXPECT_TRUE(again.load_task("a"));
}

TEST(SqliteStore, RefusesForeignDatabase) {
    TempDir dir;
    sqlite3* db = nullptr;
    ASSERT_EQ(sqlite3_open((dir / "other.db").c_str(), &db), SQLITE_OK);
    sqlite3_exec(db, "CREATE TABLE t(x); PRAGMA application_id = 42;", nullptr, nullptr, nullptr);
    sqlite3_close(db);
    EXPECT_THROW(SqliteStore(dir / "other.db"), Error);
}

TEST(Jsonl, ExportImportRoundTrip) {
    TempDir dir;
    SqliteStore src(dir / "a.db");
    const UserRecord a = src.insert_user(user("alice"));
    TaskRecord t = task("t1", a.user_id, 42);
    t.state = TaskState::Done;
    t.safety = SafetyTag::Safe;
    t.result_ref = "results/t1/mask.pgm";
    src.persist_task(t);

    std::stringstream buf;
    export_jsonl(src, buf);
    SqliteStore dst(dir / "b.db");
    EXPECT_EQ(import_jsonl(dst, buf), 2u);
    EXPECT_EQ(dst.find_user(a.user_id), a);
    auto loaded = dst.load_task("t1");
    ASSERT_TRUE(loaded);
    EXPECT_EQ(loaded->state, TaskState::Done);
    EXPECT_EQ(loaded->safety, SafetyTag::Safe);
    EXPECT_EQ(loaded->result_ref, t.result_ref);
}
