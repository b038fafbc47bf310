#pragma once

// Planning and execution of configurations. Every run owns a dedicated
// directory holding all of its inputs and outputs: the rendered command
// (command.txt), the spec snapshot (spec.bk), the captured streams
// (stdout.log, stderr.log) and the final record (record.json). Exit
// statuses are recorded verbatim; only 0 means success. Timeouts use a
// two-phase stop: polite terminate, then a forced kill after a grace
// period.

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bk/common.hpp"
#include "bk/records.hpp"
#include "bk/sha256.hpp"
#include "bk/specmatrix.hpp"
#include "bk/store.hpp"

namespace bk::orchestrator {

struct RunPlan {
    std::string run_id;  // first 16 hex digits of the canonical-serialization hash
    std::string spec_name;
    specmatrix::Configuration configuration;
    std::string command;
    std::string run_dir;
    int64_t timeout_seconds = 0;
    size_t seq = 0;  // position within one plan() call
    std::string machine_label;
};

// ---------------------------------------------------------------------------
// Executor interface: the batch-scheduler abstraction.
// ---------------------------------------------------------------------------

struct JobHandle {
    int64_t id = -1;
};

struct PollState {
    enum class Kind { queued, running, finished };
    Kind kind = Kind::queued;
    int exit_status = 0;  // valid when finished
};

class Executor {
public:
    struct SubmitResult {
        bool accepted = false;
        JobHandle handle;
        std::string reason;  // set when refused
    };

    virtual ~Executor() = default;
    virtual SubmitResult submit(const RunPlan& plan) = 0;
    virtual PollState poll(JobHandle handle) = 0;
    virtual void cancel(JobHandle handle) = 0;
    // Synthetic elapsed time for records, if the executor provides one.
    virtual std::optional<double> elapsed_override(JobHandle) { return std::nullopt; }
};

// ---------------------------------------------------------------------------
// Local executor: /bin/sh -c in the run directory, streams captured.
// ---------------------------------------------------------------------------

class LocalExecutor : public Executor {
public:
    explicit LocalExecutor(double kill_grace_seconds = 5.0)
        : grace_seconds_(kill_grace_seconds) {}

    SubmitResult submit(const RunPlan& plan) override {
        pid_t pid = ::fork();
        if (pid < 0) return {false, {}, "fork failed"};
        if (pid == 0) {
            ::setpgid(0, 0);  // own process group, so cancel() reaches children
            if (::chdir(plan.run_dir.c_str()) != 0) _exit(127);
            int out = ::open("stdout.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
            int err = ::open("stderr.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
            if (out < 0 || err < 0) _exit(127);
            ::dup2(out, STDOUT_FILENO);
            ::dup2(err, STDERR_FILENO);
            ::close(out);
            ::close(err);
            ::execl("/bin/sh", "sh", "-c", plan.command.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        std::lock_guard<std::mutex> guard(mutex_);
        int64_t id = next_id_++;
        jobs_[id] = Job{pid, false, 0};
        return {true, {id}, ""};
    }

    PollState poll(JobHandle handle) override {
        std::lock_guard<std::mutex> guard(mutex_);
        Job& job = job_ref(handle);
        if (job.reaped) return {PollState::Kind::finished, job.exit_status};
        int status = 0;
        pid_t r = ::waitpid(job.pid, &status, WNOHANG);
        if (r == 0) return {PollState::Kind::running, 0};
        job.reaped = true;
        job.exit_status = decode(status);
        return {PollState::Kind::finished, job.exit_status};
    }

    // Two-phase stop. The grace wait runs without the map lock so polls of
    // unrelated jobs are not stalled; each job is owned by one execution,
    // so nobody else reaps this pid concurrently.
    void cancel(JobHandle handle) override {
        pid_t pid;
        {
            std::lock_guard<std::mutex> guard(mutex_);
            Job& job = job_ref(handle);
            if (job.reaped) return;
            pid = job.pid;
        }
        ::kill(-pid, SIGTERM);
        int status = 0;
        bool reaped = false;
        auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(grace_seconds_);
        while (std::chrono::steady_clock::now() < deadline) {
            if (::waitpid(pid, &status, WNOHANG) > 0) {
                reaped = true;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        if (!reaped) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
        }
        std::lock_guard<std::mutex> guard(mutex_);
        Job& job = job_ref(handle);
        job.reaped = true;
        job.exit_status = decode(status);
    }

private:
    struct Job {
        pid_t pid = -1;
        bool reaped = false;
        int exit_status = 0;
    };

    static int decode(int status) {
        if (WIFEXITED(status)) return WEXITSTATUS(status);
        if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
        return 127;
    }

    Job& job_ref(JobHandle handle) {
        auto it = jobs_.find(handle.id);
        if (it == jobs_.end()) throw Error("unknown job handle");
        return it->second;
    }

    double grace_seconds_;
    std::mutex mutex_;
    std::map<int64_t, Job> jobs_;
    int64_t next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Simulated executor: a deterministic scheduler double driven by a scripted
// scenario. Its clock is virtual; each poll advances it by one second, so a
// queue delay of d seconds reports `queued` for the first d-1 polls.
// ---------------------------------------------------------------------------

struct ScenarioBehavior {
    enum class Outcome { run_normally, hang_forever, refuse_submission };

    int64_t queue_delay_seconds = 0;
    Outcome outcome = Outcome::run_normally;
    int exit_status = 0;
    std::optional<double> elapsed_override;
};

struct ExecutorScenario {
    // Indexed by plan sequence number; the last entry repeats when the
    // plan list is longer than the script.
    std::vector<ScenarioBehavior> behaviors;

    const ScenarioBehavior& for_seq(size_t seq) const {
        if (behaviors.empty()) throw ValidationError("executor scenario is empty");
        return behaviors[std::min(seq, behaviors.size() - 1)];
    }
};

inline ExecutorScenario scenario_from_json(const nlohmann::json& j) {
    ExecutorScenario s;
    if (!j.is_object() || !j.contains("behaviors") || !j.at("behaviors").is_array())
        throw ValidationError("scenario must be an object with a 'behaviors' array");
    for (const auto& bj : j.at("behaviors")) {
        ScenarioBehavior b;
        if (bj.contains("queue_delay_seconds"))
            b.queue_delay_seconds = bj.at("queue_delay_seconds").get<int64_t>();
        std::string outcome = bj.value("outcome", "run-normally");
        if (outcome == "run-normally") b.outcome = ScenarioBehavior::Outcome::run_normally;
        else if (outcome == "hang-forever") b.outcome = ScenarioBehavior::Outcome::hang_forever;
        else if (outcome == "refuse-submission")
            b.outcome = ScenarioBehavior::Outcome::refuse_submission;
        else throw ValidationError("unknown scenario outcome '" + outcome + "'");
        if (bj.contains("exit_status")) b.exit_status = bj.at("exit_status").get<int>();
        if (bj.contains("elapsed_override") && !bj.at("elapsed_override").is_null())
            b.elapsed_override = bj.at("elapsed_override").get<double>();
        s.behaviors.push_back(b);
    }
    if (s.behaviors.empty()) throw ValidationError("scenario needs at least one behavior");
    return s;
}

inline ExecutorScenario load_scenario(const std::string& path) {
    try {
        return scenario_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, "corrupt scenario JSON in " + path + ": " + e.what());
    }
}

class SimulatedExecutor : public Executor {
public:
    explicit SimulatedExecutor(ExecutorScenario scenario) : scenario_(std::move(scenario)) {}

    SubmitResult submit(const RunPlan& plan) override {
        const ScenarioBehavior& behavior = scenario_.for_seq(plan.seq);
        if (behavior.outcome == ScenarioBehavior::Outcome::refuse_submission)
            return {false, {}, "submission refused by scenario"};
        std::lock_guard<std::mutex> guard(mutex_);
        int64_t id = next_id_++;
        jobs_[id] = Job{&behavior, 0, false};
        return {true, {id}, ""};
    }

    PollState poll(JobHandle handle) override {
        std::lock_guard<std::mutex> guard(mutex_);
        Job& job = job_ref(handle);
        if (job.canceled) return {PollState::Kind::finished, 128 + SIGTERM};
        ++job.polls;
        if (job.polls < job.behavior->queue_delay_seconds) return {PollState::Kind::queued, 0};
        if (job.behavior->outcome == ScenarioBehavior::Outcome::hang_forever)
            return {PollState::Kind::running, 0};
        return {PollState::Kind::finished, job.behavior->exit_status};
    }

    void cancel(JobHandle handle) override {
        std::lock_guard<std::mutex> guard(mutex_);
        job_ref(handle).canceled = true;
    }

    std::optional<double> elapsed_override(JobHandle handle) override {
        std::lock_guard<std::mutex> guard(mutex_);
        return job_ref(handle).behavior->elapsed_override;
    }

private:
    struct Job {
        const ScenarioBehavior* behavior = nullptr;
        int64_t polls = 0;
        bool canceled = false;
    };

    Job& job_ref(JobHandle handle) {
        auto it = jobs_.find(handle.id);
        if (it == jobs_.end()) throw Error("unknown job handle");
        return it->second;
    }

    ExecutorScenario scenario_;
    std::mutex mutex_;
    std::map<int64_t, Job> jobs_;
    int64_t next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Planning.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string canonical_plan_serialization(const std::string& spec_name,
                                                const specmatrix::Configuration& config,
                                                int64_t submitted_micros, size_t seq) {
    std::string canon = "bk-run-v1\n" + spec_name + "\n";
    for (const auto& [k, v] : config.assignment) canon += k + "=" + v + "\n";  // map: sorted
    canon += std::to_string(submitted_micros) + "\n" + std::to_string(seq) + "\n";
    return canon;
}

inline std::string zero_pad4(size_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", v);
    return buf;
}

}  // namespace detail

// One plan per configuration. Each run directory is a fresh sibling under
// the spec's workdir_root, named <UTC yyyymmddThhmmssZ>-<seq>-<run_id[0:8]>,
// created here with command.txt and spec.bk written before any execution.
// The run_id hashes the submission time at microsecond resolution, so
// consecutive plan() calls never collide even within one second.
inline std::vector<RunPlan> plan(const specmatrix::BenchmarkSpec& spec,
                                 const std::vector<specmatrix::Configuration>& configs,
                                 const std::string& machine_label) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(spec.workdir_root, ec);
    if (ec || !fs::is_directory(spec.workdir_root))
        throw Error("workdir_root not writable: " + spec.workdir_root);
    {
        std::string probe = spec.workdir_root + "/.bk-probe";
        int fd = ::open(probe.c_str(), O_CREAT | O_WRONLY | O_CLOEXEC, 0644);
        if (fd < 0) throw Error("workdir_root not writable: " + spec.workdir_root);
        ::close(fd);
        ::unlink(probe.c_str());
    }

    int64_t submitted = now_utc_micros();
    std::string stamp = format_compact_utc(submitted);
    std::string spec_text = specmatrix::serialize_spec(spec);

    std::vector<RunPlan> plans;
    plans.reserve(configs.size());
    for (size_t seq = 0; seq < configs.size(); ++seq) {
        const auto& config = configs[seq];
        RunPlan p;
        p.spec_name = spec.name;
        p.configuration = config;
        p.command = specmatrix::render_command(spec, config);
        p.timeout_seconds = spec.timeout_seconds();
        p.seq = seq;
        p.machine_label = machine_label;
        p.run_id = Sha256::hex_digest(
                       detail::canonical_plan_serialization(spec.name, config, submitted, seq))
                       .substr(0, 16);
        p.run_dir = spec.workdir_root + "/" + stamp + "-" + detail::zero_pad4(seq) + "-" +
                    p.run_id.substr(0, 8);
        if (fs::exists(p.run_dir))
            throw Error("run directory already exists: " + p.run_dir);
        fs::create_directory(p.run_dir);
        write_file(p.run_dir + "/command.txt", p.command + "\n");
        write_file(p.run_dir + "/spec.bk", spec_text);
        plans.push_back(std::move(p));
    }
    return plans;
}

// ---------------------------------------------------------------------------
// Execution.
// ---------------------------------------------------------------------------

struct ExecOptions {
    double poll_interval_seconds = 0.025;
};

namespace detail {

inline void touch(const std::string& path) {
    int fd = ::open(path.c_str(), O_CREAT | O_WRONLY | O_CLOEXEC, 0644);
    if (fd >= 0) ::close(fd);
}

// Walks a dot-separated path through a JSON document; digit-only tokens
// index arrays.
inline const nlohmann::json* walk_json_path(const nlohmann::json& doc,
                                            const std::string& dot_path) {
    const nlohmann::json* cur = &doc;
    for (const std::string& token : split(dot_path, '.')) {
        if (cur->is_array() && !token.empty() &&
            std::all_of(token.begin(), token.end(),
                        [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            size_t idx = std::stoul(token);
            if (idx >= cur->size()) return nullptr;
            cur = &(*cur)[idx];
        } else if (cur->is_object() && cur->contains(token)) {
            cur = &cur->at(token);
        } else {
            return nullptr;
        }
    }
    return cur;
}

// Extracts all declared metrics; returns an error string on the first
// failure instead of partial data.
inline std::optional<std::string> extract_metrics(const specmatrix::BenchmarkSpec& spec,
                                                  const RunPlan& plan, double elapsed_seconds,
                                                  std::map<std::string, double>& out) {
    for (const auto& source : spec.metrics) {
        switch (source.kind) {
            case specmatrix::MetricSource::Kind::elapsed:
                out[source.name] = elapsed_seconds;
                break;
            case specmatrix::MetricSource::Kind::exit_status:
                out[source.name] = 0.0;  // metrics are extracted only on exit 0
                break;
            case specmatrix::MetricSource::Kind::file: {
                std::string path = plan.run_dir + "/" + source.file_path;
                if (!std::filesystem::exists(path))
                    return "metric '" + source.name + "': file not found: " + source.file_path;
                nlohmann::json doc;
                try {
                    doc = nlohmann::json::parse(read_file(path));
                } catch (const std::exception& e) {
                    return "metric '" + source.name + "': " + e.what();
                }
                const nlohmann::json* v = walk_json_path(doc, source.json_path);
                if (v == nullptr)
                    return "metric '" + source.name + "': path '" + source.json_path +
                           "' not found in " + source.file_path;
                if (!v->is_number())
                    return "metric '" + source.name + "': value at '" + source.json_path +
                           "' is not numeric";
                out[source.name] = v->get<double>();
                break;
            }
        }
    }
    return std::nullopt;
}

}  // namespace detail

// Runs one plan to completion through the executor, enforcing the timeout,
// then archives record.json and appends the record to the store. Callers
// must still check the returned state: a nonzero exit or timeout is not an
// exception, it is data.
inline RunRecord execute(const RunPlan& plan, const specmatrix::BenchmarkSpec& spec,
                         Executor& executor, store::Store& store,
                         const ExecOptions& options = {}) {
    detail::touch(plan.run_dir + "/stdout.log");
    detail::touch(plan.run_dir + "/stderr.log");

    RunRecord record;
    record.run_id = plan.run_id;
    record.spec_name = plan.spec_name;
    record.params = plan.configuration.assignment;
    record.artifact_dir = plan.run_dir;
    record.machine_label = plan.machine_label;
    record.started_at = now_utc_micros();

    auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    Executor::SubmitResult submitted = executor.submit(plan);
    if (!submitted.accepted) {
        record.state = RunState::submit_error;
        record.finished_at = now_utc_micros();
        record.elapsed_seconds = wall();
        write_file(plan.run_dir + "/harness-error.txt",
                   "submit refused: " + submitted.reason + "\n");
        write_file(plan.run_dir + "/record.json", to_json(record).dump() + "\n");
        store.append(record);
        return record;
    }

    bool timed_out = false;
    int exit_status = 0;
    while (true) {
        PollState state = executor.poll(submitted.handle);
        if (state.kind == PollState::Kind::finished) {
            exit_status = state.exit_status;
            break;
        }
        if (wall() > static_cast<double>(plan.timeout_seconds)) {
            executor.cancel(submitted.handle);
            timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(options.poll_interval_seconds));
    }

    record.finished_at = now_utc_micros();
    record.elapsed_seconds = wall();
    if (auto synthetic = executor.elapsed_override(submitted.handle))
        record.elapsed_seconds = *synthetic;

    if (timed_out) {
        record.state = RunState::timeout;
    } else {
        record.exit_status = exit_status;
        record.state = exit_status == 0 ? RunState::succeeded : RunState::failed;
        if (exit_status == 0) {
            std::map<std::string, double> metrics;
            if (auto problem =
                    detail::extract_metrics(spec, plan, record.elapsed_seconds, metrics)) {
                record.state = RunState::failed;  // exit status stays 0, recorded verbatim
                write_file(plan.run_dir + "/harness-error.txt", *problem + "\n");
            } else {
                record.metrics = std::move(metrics);
            }
        }
    }

    write_file(plan.run_dir + "/record.json", to_json(record).dump() + "\n");
    store.append(record);
    return record;
}

// Executes every plan with at most max_parallel children alive at any
// instant. Records come back in plan order.
inline std::vector<RunRecord> execute_all(const std::vector<RunPlan>& plans,
                                          const specmatrix::BenchmarkSpec& spec,
                                          Executor& executor, store::Store& store,
                                          size_t max_parallel, const ExecOptions& options = {}) {
    if (max_parallel < 1) throw ValidationError("max_parallel must be at least 1");
    std::vector<RunRecord> records(plans.size());
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::string first_error;

    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= plans.size() || failed.load()) return;
            try {
                records[i] = execute(plans[i], spec, executor, store, options);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> guard(error_mutex);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };

    size_t n_threads = std::min(max_parallel, plans.size());
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed.load()) throw Error("run execution failed: " + first_error);
    return records;
}

}  // namespace bk::orchestrator
