#pragma once

// Shared test utilities: temp directories, a small subprocess runner, and
// a random spec generator used by the expansion oracle tests.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "bk/common.hpp"
#include "bk/prng.hpp"
#include "bk/specmatrix.hpp"

namespace bktest {

class TempDir {
public:
    TempDir() {
        char tmpl[] = "/tmp/bk-test-XXXXXX";
        char* p = ::mkdtemp(tmpl);
        if (!p) throw std::runtime_error("mkdtemp failed");
        path_ = p;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::string& path() const { return path_; }
    std::string sub(const std::string& rel) const { return path_ + "/" + rel; }

private:
    std::string path_;
};

struct ProcResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs a shell command, capturing both streams. `cwd` empty means inherit.
inline ProcResult run_cmd(const std::string& cmd, const std::string& cwd = "") {
    TempDir scratch;
    std::string out_file = scratch.sub("out");
    std::string err_file = scratch.sub("err");
    std::string full;
    if (!cwd.empty()) full += "cd '" + cwd + "' && ";
    full += cmd + " >'" + out_file + "' 2>'" + err_file + "'";
    int status = std::system(full.c_str());
    ProcResult r;
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) r.exit_code = 128 + WTERMSIG(status);
    if (std::filesystem::exists(out_file)) r.out = bk::read_file(out_file);
    if (std::filesystem::exists(err_file)) r.err = bk::read_file(err_file);
    return r;
}

// ---------------------------------------------------------------------------
// Random specs for oracle-backed expansion tests: up to 4 params with up to
// 4 values each and up to 3 exclusion rules.
// ---------------------------------------------------------------------------

inline bk::specmatrix::BenchmarkSpec random_spec(bk::Xorshift64Star& rng) {
    namespace sm = bk::specmatrix;
    sm::BenchmarkSpec spec;
    spec.name = "generated";
    size_t n_params = rng.next_below(5);  // 0..4
    for (size_t i = 0; i < n_params; ++i) {
        sm::Param p;
        p.name = "p" + std::to_string(i);
        size_t n_values = 1 + rng.next_below(4);
        for (size_t v = 0; v < n_values; ++v) p.values.push_back("v" + std::to_string(v));
        spec.params.push_back(std::move(p));
    }
    if (n_params > 0) {
        size_t n_rules = rng.next_below(4);  // 0..3
        for (size_t r = 0; r < n_rules; ++r) {
            sm::ExclusionRule rule;
            size_t n_terms = 1 + rng.next_below(std::min<size_t>(n_params, 2));
            size_t first = rng.next_below(n_params);
            for (size_t t = 0; t < n_terms; ++t) {
                const sm::Param& p = spec.params[(first + t) % n_params];
                rule.conjuncts.emplace_back(p.name,
                                            p.values[rng.next_below(p.values.size())]);
            }
            spec.excludes.push_back(std::move(rule));
        }
    }
    spec.command_template = n_params > 0 ? "run --p0 {p0}" : "run";
    spec.estimate_seconds = 1 + static_cast<int64_t>(rng.next_below(100));
    spec.timeout_factor = sm::Rational{3, 2};
    return spec;
}

// Independent brute-force expansion: recursive product, then filtering.
inline std::vector<std::map<std::string, std::string>> enumerate_all(
    const bk::specmatrix::BenchmarkSpec& spec) {
    std::vector<std::map<std::string, std::string>> combos{{}};
    for (const auto& p : spec.params) {
        std::vector<std::map<std::string, std::string>> next;
        for (const auto& base : combos) {
            for (const auto& v : p.values) {
                auto copy = base;
                copy[p.name] = v;
                next.push_back(std::move(copy));
            }
        }
        combos = std::move(next);
    }
    return combos;
}

inline bool brute_force_excluded(const bk::specmatrix::BenchmarkSpec& spec,
                                 const std::map<std::string, std::string>& assignment) {
    for (const auto& rule : spec.excludes) {
        bool all = true;
        for (const auto& [k, v] : rule.conjuncts) {
            auto it = assignment.find(k);
            if (it == assignment.end() || it->second != v) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

}  // namespace bktest
