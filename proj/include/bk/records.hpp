#pragma once

// RunRecord and EventRecord: the durable value types of the harness.
// Timestamps live as UTC microseconds in memory and as RFC 3339 strings
// with a 'Z' suffix on disk.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "bk/common.hpp"

namespace bk {

enum class RunState { succeeded, failed, timeout, submit_error };

inline std::string to_string(RunState s) {
    switch (s) {
        case RunState::succeeded: return "succeeded";
        case RunState::failed: return "failed";
        case RunState::timeout: return "timeout";
        case RunState::submit_error: return "submit-error";
    }
    return "failed";
}

inline RunState run_state_from_string(const std::string& s) {
    if (s == "succeeded") return RunState::succeeded;
    if (s == "failed") return RunState::failed;
    if (s == "timeout") return RunState::timeout;
    if (s == "submit-error") return RunState::submit_error;
    throw ValidationError("unknown run state '" + s + "'");
}

struct RunRecord {
    std::string run_id;
    std::string spec_name;
    std::map<std::string, std::string> params;
    int64_t started_at = 0;   // UTC micros
    int64_t finished_at = 0;  // UTC micros
    double elapsed_seconds = 0.0;
    RunState state = RunState::failed;
    std::optional<int> exit_status;  // absent only for timeout / submit-error
    std::map<std::string, double> metrics;
    std::string artifact_dir;
    std::string machine_label;

    void validate() const {
        if (run_id.empty()) throw ValidationError("run_id must not be empty");
        if (finished_at < started_at)
            throw ValidationError("finished_at precedes started_at for run " + run_id);
        if (elapsed_seconds < 0)
            throw ValidationError("negative elapsed_seconds for run " + run_id);
        // succeeded demands exit 0; failed demands a recorded exit status but
        // tolerates 0 there (a harness-level failure such as metric
        // extraction keeps the child's true status).
        if (state == RunState::succeeded &&
            !(exit_status.has_value() && *exit_status == 0))
            throw ValidationError("succeeded run " + run_id + " must carry exit status 0");
        if (state == RunState::failed && !exit_status.has_value())
            throw ValidationError("failed run " + run_id + " lacks an exit status");
        if ((state == RunState::timeout || state == RunState::submit_error) &&
            exit_status.has_value())
            throw ValidationError("run " + run_id + " in state '" + to_string(state) +
                                  "' must not carry an exit status");
    }

    bool operator==(const RunRecord&) const = default;
};

struct EventRecord {
    int64_t timestamp = 0;  // UTC micros
    std::string label;
    std::string machine_label;

    void validate() const {
        if (label.empty()) throw ValidationError("event label must not be empty");
    }

    bool operator==(const EventRecord&) const = default;
};

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json j;
    j["run_id"] = r.run_id;
    j["spec_name"] = r.spec_name;
    j["params"] = r.params;
    j["started_at"] = format_rfc3339(r.started_at);
    j["finished_at"] = format_rfc3339(r.finished_at);
    j["elapsed_seconds"] = round6(r.elapsed_seconds);
    j["state"] = to_string(r.state);
    if (r.exit_status) j["exit_status"] = *r.exit_status;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [name, value] : r.metrics) metrics[name] = round6(value);
    j["metrics"] = metrics;
    j["artifact_dir"] = r.artifact_dir;
    j["machine_label"] = r.machine_label;
    return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    static const std::set<std::string> kKnown = {
        "run_id",     "spec_name", "params",       "started_at", "finished_at",
        "elapsed_seconds", "state", "exit_status", "metrics",    "artifact_dir",
        "machine_label"};
    if (!j.is_object()) throw ValidationError("run record must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!kKnown.count(key)) throw ValidationError("unknown run record key '" + key + "'");
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.spec_name = j.at("spec_name").get<std::string>();
    r.params = j.at("params").get<std::map<std::string, std::string>>();
    r.started_at = parse_rfc3339(j.at("started_at").get<std::string>());
    r.finished_at = parse_rfc3339(j.at("finished_at").get<std::string>());
    r.elapsed_seconds = j.at("elapsed_seconds").get<double>();
    r.state = run_state_from_string(j.at("state").get<std::string>());
    if (j.contains("exit_status")) r.exit_status = j.at("exit_status").get<int>();
    r.metrics = j.at("metrics").get<std::map<std::string, double>>();
    r.artifact_dir = j.at("artifact_dir").get<std::string>();
    r.machine_label = j.at("machine_label").get<std::string>();
    r.validate();
    return r;
}

inline nlohmann::json to_json(const EventRecord& e) {
    nlohmann::json j;
    j["timestamp"] = format_rfc3339(e.timestamp);
    j["label"] = e.label;
    j["machine_label"] = e.machine_label;
    return j;
}

inline EventRecord event_record_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("event record must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "timestamp" && key != "label" && key != "machine_label")
            throw ValidationError("unknown event record key '" + key + "'");
    EventRecord e;
    e.timestamp = parse_rfc3339(j.at("timestamp").get<std::string>());
    e.label = j.at("label").get<std::string>();
    e.machine_label = j.at("machine_label").get<std::string>();
    e.validate();
    return e;
}

}  // namespace bk
