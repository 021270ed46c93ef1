#include "segserve/store.hpp"

#include "segserve/error.hpp"
#include "segserve/random.hpp"

#include <json.hpp>
#include <sqlite3.h>

#include <istream>
#include <ostream>

namespace segserve {

namespace {

constexpr int kApplicationId = 0x53475356; // "SGSV"
constexpr int kSchemaVersion = 1;

std::vector<std::uint8_t> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) fail(ErrorCode::InvalidInput, "odd-length hex string");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        fail(ErrorCode::InvalidInput, "invalid hex digit");
    };
    std::vector<std::uint8_t> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    }
    return out;
}

} // namespace

std::string_view to_string(TaskCategory c) noexcept {
    switch (c) {
    case TaskCategory::BrainTumor: return "brain_tumor";
    case TaskCategory::Kidney: return "kidney";
    case TaskCategory::KidneyTumor: return "kidney_tumor";
    case TaskCategory::DualModal: return "dual_modal";
    }
    return "unknown";
}

std::string_view to_string(TaskState s) noexcept {
    switch (s) {
    case TaskState::Waiting: return "Waiting";
    case TaskState::Queued: return "Queued";
    case TaskState::Running: return "Running";
    case TaskState::Done: return "Done";
    case TaskState::Failed: return "Failed";
    }
    return "unknown";
}

std::string_view to_string(SafetyTag s) noexcept { return s == SafetyTag::Safe ? "Safe" : "Unsafe"; }

TaskCategory parse_category(std::string_view name) {
    for (auto c : {TaskCategory::BrainTumor, TaskCategory::Kidney, TaskCategory::KidneyTumor, TaskCategory::DualModal}) {
        if (name == to_string(c)) return c;
    }
    fail(ErrorCode::InvalidCategory, "unknown category '" + std::string(name) + "'");
}

TaskState parse_state(std::string_view name) {
    for (auto s : {TaskState::Waiting, TaskState::Queued, TaskState::Running, TaskState::Done, TaskState::Failed}) {
        if (name == to_string(s)) return s;
    }
    fail(ErrorCode::InvalidInput, "unknown task state '" + std::string(name) + "'");
}

SafetyTag parse_safety(std::string_view name) {
    if (name == "Safe") return SafetyTag::Safe;
    if (name == "Unsafe") return SafetyTag::Unsafe;
    fail(ErrorCode::InvalidInput, "unknown safety tag '" + std::string(name) + "'");
}

bool is_segmentation(TaskCategory c) noexcept { return c != TaskCategory::DualModal; }

bool is_terminal(TaskState s) noexcept { return s == TaskState::Done || s == TaskState::Failed; }

bool is_legal_transition(TaskState from, TaskState to) noexcept {
    switch (from) {
    case TaskState::Waiting: return to == TaskState::Queued;
    case TaskState::Queued: return to == TaskState::Running;
    case TaskState::Running: return to == TaskState::Done || to == TaskState::Failed;
    case TaskState::Done:
    case TaskState::Failed: return false;
    }
    return false;
}

// RAII prepared statement with positional binding.
class SqliteStore::Statement {
public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) raise("prepare");
    }
    ~Statement() { sqlite3_finalize(stmt_); }

    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, i, v));
        return *this;
    }
    Statement& bind(int i, std::string_view v) {
        check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int i, const std::vector<std::uint8_t>& v) {
        check(sqlite3_bind_blob(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
        return *this;
    }

    // True while a row is available.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        if (rc == SQLITE_CONSTRAINT || (rc & 0xFF) == SQLITE_CONSTRAINT) {
            throw Error(ErrorCode::PersistError, std::string("constraint: ") + sqlite3_errmsg(db_));
        }
        raise("step");
    }

    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
    std::string text(int col) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
    }
    std::vector<std::uint8_t> blob(int col) const {
        const auto* p = static_cast<const std::uint8_t*>(sqlite3_column_blob(stmt_, col));
        const int n = sqlite3_column_bytes(stmt_, col);
        return p ? std::vector<std::uint8_t>(p, p + n) : std::vector<std::uint8_t>();
    }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) raise("bind");
    }
    [[noreturn]] void raise(const char* what) {
        throw Error(ErrorCode::PersistError, std::string("sqlite ") + what + ": " + sqlite3_errmsg(db_));
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

namespace {

constexpr const char* kUserColumns = "user_id, username, password_hash, salt, iterations, created_at";
constexpr const char* kTaskColumns =
    "id, owner, category, submitted_at, state, safety, input_ref, result_ref, error, seq";

template <typename Stmt>
UserRecord read_user(const Stmt& s) {
    UserRecord u;
    u.user_id = s.integer(0);
    u.username = s.text(1);
    u.password_hash = s.blob(2);
    u.salt = s.blob(3);
    u.hash_iterations = static_cast<std::uint32_t>(s.integer(4));
    u.created_at = s.integer(5);
    return u;
}

template <typename Stmt>
TaskRecord read_task(const Stmt& s) {
    TaskRecord t;
    t.id = s.text(0);
    t.owner = s.integer(1);
    t.category = parse_category(s.text(2));
    t.submitted_at = s.integer(3);
    t.state = parse_state(s.text(4));
    t.safety = parse_safety(s.text(5));
    t.input_ref = s.text(6);
    t.result_ref = s.text(7);
    t.error = s.text(8);
    t.seq = s.integer(9);
    return t;
}

} // namespace

SqliteStore::SqliteStore(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        fail(ErrorCode::PersistError, "cannot open store " + path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    try {
        open_schema();
    } catch (...) {
        sqlite3_close(db_);
        db_ = nullptr;
        throw;
    }
}

SqliteStore::~SqliteStore() {
    if (db_) sqlite3_close(db_);
}

void SqliteStore::exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        fail(ErrorCode::PersistError, "sqlite exec: " + msg);
    }
}

void SqliteStore::open_schema() {
    std::int64_t app_id = 0;
    std::int64_t version = 0;
    {
        Statement s(db_, "PRAGMA application_id");
        if (s.step()) app_id = s.integer(0);
    }
    {
        Statement s(db_, "PRAGMA user_version");
        if (s.step()) version = s.integer(0);
    }
    std::int64_t tables = 0;
    {
        Statement s(db_, "SELECT count(*) FROM sqlite_master");
        if (s.step()) tables = s.integer(0);
    }

    exec("PRAGMA journal_mode=WAL");
    exec("PRAGMA synchronous=FULL");
    exec("PRAGMA foreign_keys=ON");

    if (tables == 0 && app_id == 0 && version == 0) {
        exec("BEGIN IMMEDIATE");
        exec(R"sql(
            CREATE TABLE users (
                user_id INTEGER PRIMARY KEY AUTOINCREMENT,
                username TEXT NOT NULL UNIQUE,
                password_hash BLOB NOT NULL,
                salt BLOB NOT NULL,
                iterations INTEGER NOT NULL,
                created_at INTEGER NOT NULL);
            CREATE TABLE sessions (
                token TEXT PRIMARY KEY,
                user_id INTEGER NOT NULL REFERENCES users(user_id),
                expires_at INTEGER NOT NULL);
            CREATE INDEX sessions_by_user ON sessions(user_id);
            CREATE TABLE reset_tokens (
                token TEXT PRIMARY KEY,
                user_id INTEGER NOT NULL REFERENCES users(user_id),
                expires_at INTEGER NOT NULL,
                used INTEGER NOT NULL DEFAULT 0);
            CREATE TABLE tasks (
                seq INTEGER PRIMARY KEY AUTOINCREMENT,
                id TEXT NOT NULL UNIQUE,
                owner INTEGER NOT NULL,
                category TEXT NOT NULL,
                submitted_at INTEGER NOT NULL,
                state TEXT NOT NULL,
                safety TEXT NOT NULL,
                input_ref TEXT NOT NULL,
                result_ref TEXT NOT NULL,
                error TEXT NOT NULL);
            CREATE INDEX tasks_by_owner ON tasks(owner, submitted_at);
        )sql");
        exec(("PRAGMA application_id=" + std::to_string(kApplicationId)).c_str());
        exec(("PRAGMA user_version=" + std::to_string(kSchemaVersion)).c_str());
        exec("COMMIT");
        return;
    }
    if (app_id != kApplicationId) fail(ErrorCode::PersistError, "not a segserve store (application_id mismatch)");
    if (version != kSchemaVersion) {
        fail(ErrorCode::PersistError, "unsupported store version " + std::to_string(version));
    }
}

UserRecord SqliteStore::insert_user(UserRecord user) {
    std::lock_guard lock(mutex_);
    Statement dup(db_, "SELECT 1 FROM users WHERE username = ?");
    dup.bind(1, user.username);
    if (dup.step()) fail(ErrorCode::UsernameTaken, "username '" + user.username + "' is taken");

    Statement s(db_, user.user_id > 0
                         ? "INSERT INTO users (username, password_hash, salt, iterations, created_at, user_id) "
                           "VALUES (?, ?, ?, ?, ?, ?)"
                         : "INSERT INTO users (username, password_hash, salt, iterations, created_at) "
                           "VALUES (?, ?, ?, ?, ?)");
    s.bind(1, user.username).bind(2, user.password_hash).bind(3, user.salt);
    s.bind(4, static_cast<std::int64_t>(user.hash_iterations)).bind(5, user.created_at);
    if (user.user_id > 0) s.bind(6, user.user_id);
    s.step();
    user.user_id = sqlite3_last_insert_rowid(db_);
    return user;
}

std::optional<UserRecord> SqliteStore::find_user(UserId id) {
    std::lock_guard lock(mutex_);
    Statement s(db_, (std::string("SELECT ") + kUserColumns + " FROM users WHERE user_id = ?").c_str());
    s.bind(1, id);
    if (!s.step()) return std::nullopt;
    return read_user(s);
}

std::optional<UserRecord> SqliteStore::find_user_by_name(std::string_view username) {
    std::lock_guard lock(mutex_);
    Statement s(db_, (std::string("SELECT ") + kUserColumns + " FROM users WHERE username = ?").c_str());
    s.bind(1, username);
    if (!s.step()) return std::nullopt;
    return read_user(s);
}

void SqliteStore::update_password(UserId id, const std::vector<std::uint8_t>& hash,
                                  const std::vector<std::uint8_t>& salt, std::uint32_t iterations) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "UPDATE users SET password_hash = ?, salt = ?, iterations = ? WHERE user_id = ?");
    s.bind(1, hash).bind(2, salt).bind(3, static_cast<std::int64_t>(iterations)).bind(4, id);
    s.step();
    if (sqlite3_changes(db_) == 0) fail(ErrorCode::NotFound, "unknown user " + std::to_string(id));
}

std::vector<UserRecord> SqliteStore::all_users() {
    std::lock_guard lock(mutex_);
    Statement s(db_, (std::string("SELECT ") + kUserColumns + " FROM users ORDER BY user_id").c_str());
    std::vector<UserRecord> out;
    while (s.step()) out.push_back(read_user(s));
    return out;
}

void SqliteStore::put_session(const SessionRecord& session) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "INSERT INTO sessions (token, user_id, expires_at) VALUES (?, ?, ?)");
    s.bind(1, session.token).bind(2, session.user_id).bind(3, session.expires_at);
    s.step();
}

std::optional<SessionRecord> SqliteStore::find_session(std::string_view token) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT token, user_id, expires_at FROM sessions WHERE token = ?");
    s.bind(1, token);
    if (!s.step()) return std::nullopt;
    return SessionRecord{s.text(0), s.integer(1), s.integer(2)};
}

void SqliteStore::delete_sessions_for_user(UserId id) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "DELETE FROM sessions WHERE user_id = ?");
    s.bind(1, id);
    s.step();
}

void SqliteStore::put_reset(const ResetRecord& reset) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "INSERT INTO reset_tokens (token, user_id, expires_at, used) VALUES (?, ?, ?, ?)");
    s.bind(1, reset.token).bind(2, reset.user_id).bind(3, reset.expires_at).bind(4, std::int64_t{reset.used});
    s.step();
}

std::optional<ResetRecord> SqliteStore::take_reset(std::string_view token) {
    std::lock_guard lock(mutex_);
    exec("BEGIN IMMEDIATE");
    try {
        std::optional<ResetRecord> out;
        {
            Statement s(db_, "SELECT token, user_id, expires_at, used FROM reset_tokens WHERE token = ?");
            s.bind(1, token);
            if (s.step()) out = ResetRecord{s.text(0), s.integer(1), s.integer(2), s.integer(3) != 0};
        }
        if (out) {
            Statement u(db_, "UPDATE reset_tokens SET used = 1 WHERE token = ?");
            u.bind(1, token);
            u.step();
        }
        exec("COMMIT");
        return out;
    } catch (...) {
        sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
        throw;
    }
}

TaskRecord SqliteStore::persist_task(TaskRecord task) {
    std::lock_guard lock(mutex_);
    Statement s(db_,
                "INSERT INTO tasks (id, owner, category, submitted_at, state, safety, input_ref, result_ref, error) "
                "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)");
    s.bind(1, task.id).bind(2, task.owner).bind(3, to_string(task.category)).bind(4, task.submitted_at);
    s.bind(5, to_string(task.state)).bind(6, to_string(task.safety)).bind(7, task.input_ref);
    s.bind(8, task.result_ref).bind(9, task.error);
    s.step();
    task.seq = sqlite3_last_insert_rowid(db_);
    return task;
}

std::optional<TaskRecord> SqliteStore::load_task(std::string_view id) {
    std::lock_guard lock(mutex_);
    Statement s(db_, (std::string("SELECT ") + kTaskColumns + " FROM tasks WHERE id = ?").c_str());
    s.bind(1, id);
    if (!s.step()) return std::nullopt;
    return read_task(s);
}

void SqliteStore::update_task(const TaskRecord& task) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "UPDATE tasks SET state = ?, safety = ?, result_ref = ?, error = ? WHERE id = ?");
    s.bind(1, to_string(task.state)).bind(2, to_string(task.safety)).bind(3, task.result_ref);
    s.bind(4, task.error).bind(5, task.id);
    s.step();
    if (sqlite3_changes(db_) == 0) fail(ErrorCode::NotFound, "unknown task " + task.id);
}

std::vector<TaskRecord> SqliteStore::list_tasks(UserId owner) {
    std::lock_guard lock(mutex_);
    Statement s(db_, (std::string("SELECT ") + kTaskColumns +
                      " FROM tasks WHERE owner = ? ORDER BY submitted_at DESC, seq DESC")
                         .c_str());
    s.bind(1, owner);
    std::vector<TaskRecord> out;
    while (s.step()) out.push_back(read_task(s));
    return out;
}

std::vector<TaskRecord> SqliteStore::all_tasks() {
    std::lock_guard lock(mutex_);
    Statement s(db_, (std::string("SELECT ") + kTaskColumns + " FROM tasks ORDER BY seq").c_str());
    std::vector<TaskRecord> out;
    while (s.step()) out.push_back(read_task(s));
    return out;
}

void export_jsonl(Store& store, std::ostream& out) {
    for (const auto& u : store.all_users()) {
        nlohmann::json j = {{"kind", "user"},
                            {"user_id", u.user_id},
                            {"username", u.username},
                            {"password_hash", to_hex(u.password_hash)},
                            {"salt", to_hex(u.salt)},
                            {"iterations", u.hash_iterations},
                            {"created_at", u.created_at}};
        out << j.dump() << '\n';
    }
    for (const auto& t : store.all_tasks()) {
        nlohmann::json j = {{"kind", "task"},
                            {"id", t.id},
                            {"owner", t.owner},
                            {"category", to_string(t.category)},
                            {"submitted_at", t.submitted_at},
                            {"state", to_string(t.state)},
                            {"safety", to_string(t.safety)},
                            {"input_ref", t.input_ref},
                            {"result_ref", t.result_ref},
                            {"error", t.error}};
        out << j.dump() << '\n';
    }
}

std::size_t import_jsonl(Store& store, std::istream& in) {
    std::size_t count = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) fail(ErrorCode::InvalidInput, "malformed dump line");
        try {
            const std::string kind = j.at("kind");
            if (kind == "user") {
                UserRecord u;
                u.user_id = j.at("user_id");
                u.username = j.at("username");
                u.password_hash = from_hex(j.at("password_hash").get<std::string>());
                u.salt = from_hex(j.at("salt").get<std::string>());
                u.hash_iterations = j.at("iterations");
                u.created_at = j.at("created_at");
                store.insert_user(std::move(u));
            } else if (kind == "task") {
                TaskRecord t;
                t.id = j.at("id");
                t.owner = j.at("owner");
                t.category = parse_category(j.at("category").get<std::string>());
                t.submitted_at = j.at("submitted_at");
                t.state = parse_state(j.at("state").get<std::string>());
                t.safety = parse_safety(j.at("safety").get<std::string>());
                t.input_ref = j.at("input_ref");
                t.result_ref = j.at("result_ref");
                t.error = j.at("error");
                store.persist_task(std::move(t));
            } else {
                fail(ErrorCode::InvalidInput, "unknown record kind '" + kind + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::InvalidInput, std::string("malformed dump line: ") + e.what());
        }
        ++count;
    }
    return count;
}

} // namespace segserve
