#include "segserve/orchestrator.hpp"

#include "segserve/error.hpp"
#include "segserve/random.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace segserve {

namespace {

void fsync_path(const std::filesystem::path& path, bool directory) {
    const int fd = ::open(path.c_str(), directory ? (O_RDONLY | O_DIRECTORY) : O_RDONLY);
    if (fd < 0) fail(ErrorCode::PersistError, "open " + path.string() + ": " + std::strerror(errno));
    const int rc = ::fsync(fd);
    ::close(fd);
    if (rc != 0) fail(ErrorCode::PersistError, "fsync " + path.string() + ": " + std::strerror(errno));
}

void write_durable(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) fail(ErrorCode::PersistError, "open " + path.string() + ": " + std::strerror(errno));
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            fail(ErrorCode::PersistError, "write " + path.string() + ": " + std::strerror(err));
        }
        off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const int err = errno;
        ::close(fd);
        fail(ErrorCode::PersistError, "fsync " + path.string() + ": " + std::strerror(err));
    }
    ::close(fd);
}

bool valid_artifact_name(std::string_view name) {
    return !name.empty() && name != "SAFE" && name != "." && name != ".." &&
           name.find('/') == std::string_view::npos && name.find('\0') == std::string_view::npos;
}

} // namespace

ResultStore::ResultStore(std::filesystem::path data_root) : root_(std::move(data_root) / "results") {
    std::filesystem::create_directories(root_);
}

std::filesystem::path ResultStore::task_dir(std::string_view id) const {
    if (!is_uuid(id)) fail(ErrorCode::InvalidInput, "malformed task id");
    return root_ / std::string(id);
}

void ResultStore::write_artifact(std::string_view id, const Artifact& artifact) {
    if (!valid_artifact_name(artifact.name)) fail(ErrorCode::InvalidInput, "bad artifact name");
    const auto dir = task_dir(id);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorCode::PersistError, "mkdir " + dir.string() + ": " + ec.message());
    const auto tmp = dir / (artifact.name + ".part");
    write_durable(tmp, artifact.bytes);
    std::filesystem::rename(tmp, dir / artifact.name, ec);
    if (ec) fail(ErrorCode::PersistError, "rename into " + dir.string() + ": " + ec.message());
    fsync_path(dir, true);
}

void ResultStore::write_sentinel(std::string_view id) {
    const auto dir = task_dir(id);
    write_durable(dir / "SAFE", {});
    fsync_path(dir, true);
}

bool ResultStore::has_sentinel(std::string_view id) const {
    std::error_code ec;
    return std::filesystem::is_regular_file(task_dir(id) / "SAFE", ec);
}

Bytes ResultStore::read_artifact(std::string_view id, std::string_view name) const {
    if (!valid_artifact_name(name)) fail(ErrorCode::InvalidInput, "bad artifact name");
    return read_file(task_dir(id) / std::string(name));
}

Orchestrator::Orchestrator(Store& store, ResultStore& results, TaskRunner runner, OrchestratorOptions options,
                           Clock clock)
    : store_(store), results_(results), runner_(std::move(runner)), options_(options), clock_(std::move(clock)) {
    if (options_.capacity == 0) fail(ErrorCode::InvalidInput, "queue capacity must be positive");
    if (!runner_) fail(ErrorCode::InvalidInput, "a task runner is required");

    for (TaskRecord& t : store_.all_tasks()) {
        if (t.state == TaskState::Running) {
            t.state = TaskState::Failed;
            t.error = "interrupted by restart";
            store_.update_task(t);
        }
        if (t.state == TaskState::Waiting) waiting_.push_back(t.id);
        if (t.state == TaskState::Queued) execution_.push_back(t.id);
        records_.emplace(t.id, std::move(t));
    }
    peak_execution_ = execution_.size();
}

Orchestrator::~Orchestrator() { stop(); }

void Orchestrator::start() {
    std::lock_guard lock(mutex_);
    if (!threads_.empty()) return;
    threads_.emplace_back([this](std::stop_token st) { assignment_loop(st); });
    for (std::size_t i = 0; i < std::max<std::size_t>(1, options_.workers); ++i) {
        threads_.emplace_back([this](std::stop_token st) { worker_loop(st); });
    }
}

void Orchestrator::stop() {
    std::vector<std::jthread> threads;
    {
        std::lock_guard lock(mutex_);
        threads.swap(threads_);
    }
    for (auto& t : threads) t.request_stop();
    threads.clear();
}

void Orchestrator::set_observer(TaskObserver observer) {
    std::lock_guard lock(mutex_);
    observer_ = std::move(observer);
}

TaskRecord& Orchestrator::record_locked(std::string_view id) {
    auto it = records_.find(std::string(id));
    if (it == records_.end()) fail(ErrorCode::NotFound, "unknown task " + std::string(id));
    return it->second;
}

const TaskRecord& Orchestrator::record_locked(std::string_view id) const {
    auto it = records_.find(std::string(id));
    if (it == records_.end()) fail(ErrorCode::NotFound, "unknown task " + std::string(id));
    return it->second;
}

void Orchestrator::emit(const TaskRecord& record) {
    if (observer_) observer_({record.id, record.state, record.safety, waiting_.size(), execution_.size()});
}

void Orchestrator::transition(TaskRecord& record, TaskState to) {
    if (!is_legal_transition(record.state, to)) {
        fail(ErrorCode::IllegalTransition, "task " + record.id + ": " + std::string(to_string(record.state)) +
                                               " -> " + std::string(to_string(to)));
    }
    TaskRecord next = record;
    next.state = to;
    store_.update_task(next);
    record = std::move(next);
}

std::string Orchestrator::submit(UserId owner, TaskCategory category, std::string input_ref) {
    TaskRecord task;
    task.id = uuid_v4();
    task.owner = owner;
    task.category = category;
    task.input_ref = std::move(input_ref);

    std::lock_guard lock(mutex_);
    // Timestamp under the lock so submitted_at is monotone in waiting-list order.
    task.submitted_at = clock_();
    task = store_.persist_task(std::move(task));
    const std::string id = task.id;
    waiting_.push_back(id);
    auto [it, inserted] = records_.emplace(id, std::move(task));
    if (!inserted) fail(ErrorCode::PersistError, "duplicate task id");
    emit(it->second);
    admit_cv_.notify_all();
    return id;
}

std::size_t Orchestrator::assignment_step() {
    std::lock_guard lock(mutex_);
    std::size_t moved = 0;
    while (!waiting_.empty() && execution_.size() < options_.capacity) {
        TaskRecord& r = record_locked(waiting_.front());
        transition(r, TaskState::Queued);
        execution_.push_back(r.id);
        waiting_.pop_front();
        peak_execution_ = std::max(peak_execution_, execution_.size());
        emit(r);
        ++moved;
    }
    if (moved > 0) work_cv_.notify_all();
    return moved;
}

std::optional<std::string> Orchestrator::claim_next() {
    std::lock_guard lock(mutex_);
    if (execution_.empty()) return std::nullopt;
    TaskRecord& r = record_locked(execution_.front());
    transition(r, TaskState::Running);
    execution_.pop_front();
    ++running_;
    emit(r);
    admit_cv_.notify_all();
    return r.id;
}

std::optional<std::string> Orchestrator::run_next() {
    auto id = claim_next();
    if (id) execute(*id);
    return id;
}

void Orchestrator::execute(const std::string& id) {
    TaskRecord snapshot;
    {
        std::lock_guard lock(mutex_);
        snapshot = record_locked(id);
    }
    Artifact artifact;
    try {
        artifact = runner_(snapshot);
    } catch (const std::exception& e) {
        fail_task(id, e.what());
        return;
    }
    try {
        complete(id, artifact);
    } catch (const Error&) {
        // complete() has already recorded the failure on the task.
    }
}

void Orchestrator::fail_task(std::string_view id, std::string reason) {
    std::lock_guard lock(mutex_);
    TaskRecord& r = record_locked(id);
    if (r.state != TaskState::Running) {
        fail(ErrorCode::IllegalTransition, "task " + r.id + " is not running");
    }
    TaskRecord next = r;
    next.state = TaskState::Failed;
    next.error = std::move(reason);
    store_.update_task(next);
    r = std::move(next);
    completing_.erase(r.id);
    --running_;
    emit(r);
    idle_cv_.notify_all();
}

void Orchestrator::complete(std::string_view id_view, const Artifact& artifact) {
    const std::string id(id_view);
    {
        std::lock_guard lock(mutex_);
        const TaskRecord& r = record_locked(id);
        if (r.state != TaskState::Running || completing_.contains(id)) {
            fail(ErrorCode::IllegalTransition,
                 "task " + id + " cannot complete from " + std::string(to_string(r.state)));
        }
        completing_.insert(id);
    }

    // 1. artifact
    try {
        results_.write_artifact(id, artifact);
    } catch (const std::exception& e) {
        fail_task(id, std::string("result write failed: ") + e.what());
        throw Error(ErrorCode::PersistError, e.what());
    }

    // 2. Done
    {
        std::lock_guard lock(mutex_);
        TaskRecord& r = record_locked(id);
        TaskRecord next = r;
        next.state = TaskState::Done;
        next.result_ref = (results_.task_dir(id) / artifact.name).string();
        try {
            store_.update_task(next);
        } catch (...) {
            completing_.erase(id);
            --running_;
            idle_cv_.notify_all();
            throw;
        }
        r = std::move(next);
        emit(r);
    }

    // 3. Safe: sentinel on disk, then the persisted tag.
    auto finish = [&](std::optional<std::string> error) {
        std::lock_guard lock(mutex_);
        TaskRecord& r = record_locked(id);
        TaskRecord next = r;
        if (error) {
            next.error = *error;
        } else {
            next.safety = SafetyTag::Safe;
        }
        try {
            store_.update_task(next);
            r = std::move(next);
            emit(r);
        } catch (...) {
            completing_.erase(id);
            --running_;
            idle_cv_.notify_all();
            throw;
        }
        completing_.erase(id);
        --running_;
        idle_cv_.notify_all();
    };

    try {
        results_.write_sentinel(id);
    } catch (const std::exception& e) {
        finish(std::string("safety sentinel write failed: ") + e.what());
        throw Error(ErrorCode::PersistError, e.what());
    }
    finish(std::nullopt);
}

TaskRecord Orchestrator::query_status(std::string_view id) const {
    std::lock_guard lock(mutex_);
    return record_locked(id);
}

std::vector<TaskRecord> Orchestrator::list_tasks(UserId owner) const { return store_.list_tasks(owner); }

ResultFile Orchestrator::read_result(std::string_view id) const {
    TaskRecord r = query_status(id);
    if (r.state != TaskState::Done || r.safety != SafetyTag::Safe || !results_.has_sentinel(r.id)) {
        fail(ErrorCode::ResultNotReady, "result for task " + r.id + " is not ready");
    }
    const std::string name = std::filesystem::path(r.result_ref).filename().string();
    return {name, results_.read_artifact(r.id, name)};
}

std::size_t Orchestrator::waiting_size() const {
    std::lock_guard lock(mutex_);
    return waiting_.size();
}

std::size_t Orchestrator::execution_size() const {
    std::lock_guard lock(mutex_);
    return execution_.size();
}

std::size_t Orchestrator::peak_execution_size() const {
    std::lock_guard lock(mutex_);
    return peak_execution_;
}

bool Orchestrator::idle_locked() const { return waiting_.empty() && execution_.empty() && running_ == 0; }

bool Orchestrator::wait_idle(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    return idle_cv_.wait_for(lock, timeout, [&] { return idle_locked(); });
}

void Orchestrator::assignment_loop(std::stop_token stop) {
    while (!stop.stop_requested()) {
        {
            std::unique_lock lock(mutex_);
            const bool ready = admit_cv_.wait(lock, stop, [&] {
                return !waiting_.empty() && execution_.size() < options_.capacity;
            });
            if (!ready) return;
        }
        try {
            assignment_step();
        } catch (const Error&) {
            // A persist failure leaves the head task Waiting; retry on the next wake-up.
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
}

void Orchestrator::worker_loop(std::stop_token stop) {
    while (!stop.stop_requested()) {
        {
            std::unique_lock lock(mutex_);
            const bool ready = work_cv_.wait(lock, stop, [&] { return !execution_.empty(); });
            if (!ready) return;
        }
        try {
            run_next();
        } catch (const Error&) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
}

} // namespace segserve
