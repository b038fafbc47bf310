#pragma once

// Append-only JSON Lines persistence for run records and machine events.
//
// Store root layout:
//   records.jsonl   one RunRecord per line
//   events.jsonl    one EventRecord per line
//   lock            advisory flock target guarding writers
//
// One writer at a time per store root; writers take the advisory lock for
// the duration of an append and fsync before returning. Readers may run
// concurrently and see a prefix-consistent file. Corrupt lines are hard
// errors reported with their line number, never skipped.

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bk/common.hpp"
#include "bk/records.hpp"

namespace bk::store {

struct Query {
    std::optional<std::string> spec_name;
    std::optional<std::string> machine_label;
    std::map<std::string, std::string> param_equals;
    std::optional<int64_t> from;  // inclusive, UTC micros
    std::optional<int64_t> to;    // exclusive
    std::optional<std::set<RunState>> states;

    void validate() const {
        if (from && to && *to < *from)
            throw ValidationError("query time range is not well-ordered");
    }

    bool matches(const RunRecord& r) const {
        if (spec_name && r.spec_name != *spec_name) return false;
        if (machine_label && r.machine_label != *machine_label) return false;
        for (const auto& [k, v] : param_equals) {
            auto it = r.params.find(k);
            if (it == r.params.end() || it->second != v) return false;
        }
        if (from && r.started_at < *from) return false;
        if (to && r.started_at >= *to) return false;
        if (states && !states->count(r.state)) return false;
        return true;
    }
};

namespace detail {

// RAII advisory lock on <root>/lock.
class FileLock {
public:
    explicit FileLock(const std::string& lock_path) {
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error("cannot open lock file: " + lock_path);
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw Error("cannot lock store: " + lock_path);
        }
    }
    ~FileLock() {
        if (fd_ >= 0) ::close(fd_);  // closing releases the flock
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

inline void append_line_fsync(const std::string& path, const std::string& line) {
    int fd = ::open(path.c_str(), O_CREAT | O_WRONLY | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw Error("cannot open for append: " + path);
    std::string payload = line + "\n";
    ssize_t n = ::write(fd, payload.data(), payload.size());
    if (n != static_cast<ssize_t>(payload.size())) {
        ::close(fd);
        throw Error("short write: " + path);
    }
    if (::fsync(fd) != 0) {
        ::close(fd);
        throw Error("fsync failed: " + path);
    }
    ::close(fd);
}

// Parses every line of a JSONL file through `fn`; reports corrupt lines
// with their 1-based line number.
template <typename Fn>
void for_each_line(const std::string& path, Fn&& fn) {
    if (!std::filesystem::exists(path)) return;
    std::string content = read_file(path);
    int lineno = 0;
    size_t start = 0;
    while (start < content.size()) {
        size_t end = content.find('\n', start);
        if (end == std::string::npos) end = content.size();
        ++lineno;
        std::string line = content.substr(start, end - start);
        start = end + 1;
        if (trim(line).empty()) {
            if (end != content.size())
                throw ParseError(lineno, "blank line in " + path);
            continue;
        }
        try {
            fn(nlohmann::json::parse(line));
        } catch (const ValidationError& e) {
            throw ParseError(lineno, std::string(e.what()) + " in " + path);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, "corrupt JSON in " + path + ": " + e.what());
        }
    }
}

}  // namespace detail

class Store {
public:
    explicit Store(std::string root) : root_(std::move(root)) {
        std::error_code ec;
        std::filesystem::create_directories(root_, ec);
        if (ec || !std::filesystem::is_directory(root_))
            throw Error("cannot create store root: " + root_);
    }

    const std::string& root() const { return root_; }
    std::string records_path() const { return root_ + "/records.jsonl"; }
    std::string events_path() const { return root_ + "/events.jsonl"; }

    // Throws on writability problems without touching the data files.
    void check_writable() const {
        std::string probe = root_ + "/lock";
        int fd = ::open(probe.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd < 0) throw Error("store root not writable: " + root_);
        ::close(fd);
    }

    void append(const RunRecord& record) {
        record.validate();
        std::lock_guard<std::mutex> guard(mutex_);
        detail::FileLock lock(root_ + "/lock");
        refresh_index_locked();
        if (run_ids_.count(record.run_id))
            throw ValidationError("duplicate run_id '" + record.run_id + "'");
        std::string line = to_json(record).dump();
        detail::append_line_fsync(records_path(), line);
        run_ids_.insert(record.run_id);
        indexed_size_ += line.size() + 1;
    }

    std::vector<RunRecord> query(const Query& q) const {
        q.validate();
        std::vector<RunRecord> out;
        detail::for_each_line(records_path(), [&](const nlohmann::json& j) {
            RunRecord r = run_record_from_json(j);
            if (q.matches(r)) out.push_back(std::move(r));
        });
        std::stable_sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) {
            return a.started_at != b.started_at ? a.started_at < b.started_at
                                                : a.run_id < b.run_id;
        });
        return out;
    }

    std::vector<RunRecord> query_all() const { return query(Query{}); }

    void append_event(const EventRecord& event) {
        event.validate();
        std::lock_guard<std::mutex> guard(mutex_);
        detail::FileLock lock(root_ + "/lock");
        detail::append_line_fsync(events_path(), to_json(event).dump());
    }

    std::vector<EventRecord> list_events(std::optional<int64_t> from = std::nullopt,
                                         std::optional<int64_t> to = std::nullopt,
                                         std::optional<std::string> machine_label =
                                             std::nullopt) const {
        if (from && to && *to < *from)
            throw ValidationError("event time range is not well-ordered");
        std::vector<EventRecord> out;
        detail::for_each_line(events_path(), [&](const nlohmann::json& j) {
            EventRecord e = event_record_from_json(j);
            if (from && e.timestamp < *from) return;
            if (to && e.timestamp >= *to) return;
            if (machine_label && e.machine_label != *machine_label) return;
            out.push_back(std::move(e));
        });
        std::stable_sort(out.begin(), out.end(),
                         [](const EventRecord& a, const EventRecord& b) {
                             return a.timestamp < b.timestamp;
                         });
        return out;
    }

private:
    // Reload the run_id index when the file changed under us, e.g. when a
    // previous Store object in the same process wrote to the same root.
    void refresh_index_locked() {
        uint64_t size = 0;
        struct stat st{};
        if (::stat(records_path().c_str(), &st) == 0) size = static_cast<uint64_t>(st.st_size);
        if (size == indexed_size_) return;
        run_ids_.clear();
        detail::for_each_line(records_path(), [&](const nlohmann::json& j) {
            run_ids_.insert(j.at("run_id").get<std::string>());
        });
        indexed_size_ = size;
    }

    std::string root_;
    std::mutex mutex_;
    std::set<std::string> run_ids_;
    uint64_t indexed_size_ = 0;
};

}  // namespace bk::store
