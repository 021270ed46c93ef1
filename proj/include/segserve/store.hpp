#pragma once

#include "segserve/clock.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;

namespace segserve {

using UserId = std::int64_t;

struct UserRecord {
    UserId user_id = 0;
    std::string username;
    std::vector<std::uint8_t> password_hash;
    std::vector<std::uint8_t> salt;
    std::uint32_t hash_iterations = 0;
    TimestampMs created_at = 0;

    bool operator==(const UserRecord&) const = default;
};

struct SessionRecord {
    std::string token;
    UserId user_id = 0;
    TimestampMs expires_at = 0;

    bool operator==(const SessionRecord&) const = default;
};

struct ResetRecord {
    std::string token;
    UserId user_id = 0;
    TimestampMs expires_at = 0;
    bool used = false;

    bool operator==(const ResetRecord&) const = default;
};

enum class TaskCategory { BrainTumor, Kidney, KidneyTumor, DualModal };
enum class TaskState { Waiting, Queued, Running, Done, Failed };
enum class SafetyTag { Unsafe, Safe };

std::string_view to_string(TaskCategory c) noexcept;
std::string_view to_string(TaskState s) noexcept;
std::string_view to_string(SafetyTag s) noexcept;
// Throws InvalidCategory.
TaskCategory parse_category(std::string_view name);
TaskState parse_state(std::string_view name);
SafetyTag parse_safety(std::string_view name);

bool is_segmentation(TaskCategory c) noexcept;
bool is_terminal(TaskState s) noexcept;
// Waiting -> Queued -> Running -> {Done, Failed}.
bool is_legal_transition(TaskState from, TaskState to) noexcept;

struct TaskRecord {
    std::string id;
    UserId owner = 0;
    TaskCategory category = TaskCategory::BrainTumor;
    TimestampMs submitted_at = 0;
    TaskState state = TaskState::Waiting;
    SafetyTag safety = SafetyTag::Unsafe;
    std::string input_ref;
    std::string result_ref;
    std::string error;
    std::int64_t seq = 0; // insertion order, assigned by the store

    bool operator==(const TaskRecord&) const = default;
};

// Persistence boundary for users, sessions, reset tokens and task records.
// Every mutating call is durable when it returns.
class Store {
public:
    virtual ~Store() = default;

    // Assigns user_id. Throws UsernameTaken.
    virtual UserRecord insert_user(UserRecord user) = 0;
    virtual std::optional<UserRecord> find_user(UserId id) = 0;
    virtual std::optional<UserRecord> find_user_by_name(std::string_view username) = 0;
    virtual void update_password(UserId id, const std::vector<std::uint8_t>& hash,
                                 const std::vector<std::uint8_t>& salt, std::uint32_t iterations) = 0;
    virtual std::vector<UserRecord> all_users() = 0;

    virtual void put_session(const SessionRecord& session) = 0;
    virtual std::optional<SessionRecord> find_session(std::string_view token) = 0;
    virtual void delete_sessions_for_user(UserId id) = 0;

    virtual void put_reset(const ResetRecord& reset) = 0;
    // Marks the token used and returns its prior state in one atomic step.
    virtual std::optional<ResetRecord> take_reset(std::string_view token) = 0;

    // Assigns seq. Throws PersistError on duplicate ids.
    virtual TaskRecord persist_task(TaskRecord task) = 0;
    virtual std::optional<TaskRecord> load_task(std::string_view id) = 0;
    // Replaces state, safety, result_ref and error atomically. Throws NotFound.
    virtual void update_task(const TaskRecord& task) = 0;
    // Newest first (submitted_at, then seq, descending).
    virtual std::vector<TaskRecord> list_tasks(UserId owner) = 0;
    // Insertion order.
    virtual std::vector<TaskRecord> all_tasks() = 0;
};

// Single-file SQLite store (WAL journal, synchronous=FULL). The file carries
// application_id 'SGSV' and user_version 1; anything else is refused.
class SqliteStore final : public Store {
public:
    explicit SqliteStore(const std::filesystem::path& path);
    ~SqliteStore() override;

    SqliteStore(const SqliteStore&) = delete;
    SqliteStore& operator=(const SqliteStore&) = delete;

    UserRecord insert_user(UserRecord user) override;
    std::optional<UserRecord> find_user(UserId id) override;
    std::optional<UserRecord> find_user_by_name(std::string_view username) override;
    void update_password(UserId id, const std::vector<std::uint8_t>& hash,
                         const std::vector<std::uint8_t>& salt, std::uint32_t iterations) override;
    std::vector<UserRecord> all_users() override;

    void put_session(const SessionRecord& session) override;
    std::optional<SessionRecord> find_session(std::string_view token) override;
    void delete_sessions_for_user(UserId id) override;

    void put_reset(const ResetRecord& reset) override;
    std::optional<ResetRecord> take_reset(std::string_view token) override;

    TaskRecord persist_task(TaskRecord task) override;
    std::optional<TaskRecord> load_task(std::string_view id) override;
    void update_task(const TaskRecord& task) override;
    std::vector<TaskRecord> list_tasks(UserId owner) override;
    std::vector<TaskRecord> all_tasks() override;

private:
    class Statement;

    void exec(const char* sql);
    void open_schema();

    std::mutex mutex_;
    sqlite3* db_ = nullptr;
};

// Line-delimited JSON dump: one {"kind":"user",...} or {"kind":"task",...}
// object per line. Hash and salt bytes are hex encoded.
void export_jsonl(Store& store, std::ostream& out);
// Returns the number of records imported. Users keep their ids.
std::size_t import_jsonl(Store& store, std::istream& in);

} // namespace segserve
