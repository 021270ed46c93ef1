#pragma once

// Two-stage task admission: an unbounded FIFO waiting list feeding a bounded
// FIFO execution queue (capacity C) that worker threads consume. A single
// assignment loop moves tasks across; it sleeps until a submission arrives or
// the execution queue gains a free slot.
//
// Results become readable only after the artifact is durably written, the
// task is Done, and the SAFE sentinel plus the persisted Safe tag are in
// place, in that order.

#include "segserve/clock.hpp"
#include "segserve/image_io.hpp"
#include "segserve/store.hpp"

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace segserve {

struct Artifact {
    std::string name; // file name inside the task's result directory
    Bytes bytes;
};

// <data_root>/results/<task-id>/{artifact, SAFE}
class ResultStore {
public:
    explicit ResultStore(std::filesystem::path data_root);
    virtual ~ResultStore() = default;

    std::filesystem::path task_dir(std::string_view id) const;

    // Temp file + fsync + rename, so the final name never holds a partial write.
    virtual void write_artifact(std::string_view id, const Artifact& artifact);
    // Zero-length SAFE sentinel, fsynced.
    virtual void write_sentinel(std::string_view id);

    bool has_sentinel(std::string_view id) const;
    Bytes read_artifact(std::string_view id, std::string_view name) const;

private:
    std::filesystem::path root_;
};

using TaskRunner = std::function<Artifact(const TaskRecord&)>;

struct TaskEvent {
    std::string id;
    TaskState state;
    SafetyTag safety;
    std::size_t waiting_size;
    std::size_t execution_size;
};
// Invoked under the orchestrator lock, in transition order. Must not call
// back into the orchestrator.
using TaskObserver = std::function<void(const TaskEvent&)>;

struct OrchestratorOptions {
    std::size_t capacity = 4;
    std::size_t workers = 1;
};

struct ResultFile {
    std::string name;
    Bytes bytes;
};

class Orchestrator {
public:
    // Reloads persisted tasks: Waiting tasks rejoin the waiting list and
    // Queued tasks the execution queue (both in submission order); tasks
    // caught Running are marked Failed.
    Orchestrator(Store& store, ResultStore& results, TaskRunner runner, OrchestratorOptions options = {},
                 Clock clock = system_clock());
    ~Orchestrator();

    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    // Spawns the assignment loop and `workers` worker loops.
    void start();
    // Signals every loop and joins. Queued work stays persisted.
    void stop();

    void set_observer(TaskObserver observer);

    // Persists a Waiting/Unsafe record and wakes the assignment loop.
    std::string submit(UserId owner, TaskCategory category, std::string input_ref);

    // Moves waiting tasks into the execution queue while it has room.
    std::size_t assignment_step();

    // Dequeues the head of the execution queue and marks it Running without
    // executing it.
    std::optional<std::string> claim_next();

    // claim_next() + run the pipeline + complete() (or Failed on error).
    std::optional<std::string> run_next();

    // Requires Running. Writes the artifact, then Done, then Safe.
    // A write failure leaves the task Failed and Unsafe.
    void complete(std::string_view id, const Artifact& artifact);

    // Running -> Failed with a recorded reason.
    void fail_task(std::string_view id, std::string reason);

    TaskRecord query_status(std::string_view id) const;
    std::vector<TaskRecord> list_tasks(UserId owner) const;

    // Throws NotFound, or ResultNotReady unless Done, Safe and sentineled.
    ResultFile read_result(std::string_view id) const;

    std::size_t waiting_size() const;
    std::size_t execution_size() const;
    std::size_t peak_execution_size() const;
    std::size_t capacity() const noexcept { return options_.capacity; }

    // Blocks until nothing is waiting, queued or running.
    bool wait_idle(std::chrono::milliseconds timeout) const;

private:
    void transition(TaskRecord& record, TaskState to);
    void emit(const TaskRecord& record);
    TaskRecord& record_locked(std::string_view id);
    const TaskRecord& record_locked(std::string_view id) const;
    void assignment_loop(std::stop_token stop);
    void worker_loop(std::stop_token stop);
    void execute(const std::string& id);
    bool idle_locked() const;

    Store& store_;
    ResultStore& results_;
    TaskRunner runner_;
    OrchestratorOptions options_;
    Clock clock_;

    mutable std::mutex mutex_;
    std::condition_variable_any admit_cv_;
    std::condition_variable_any work_cv_;
    mutable std::condition_variable idle_cv_;
    std::deque<std::string> waiting_;
    std::deque<std::string> execution_;
    std::unordered_map<std::string, TaskRecord> records_;
    std::unordered_set<std::string> completing_;
    std::size_t running_ = 0;
    std::size_t peak_execution_ = 0;
    TaskObserver observer_;
    std::vector<std::jthread> threads_;
};

} // namespace segserve
