#pragma once

// Turning stored records and job telemetry into scaling tables, regression
// findings, and anomaly findings. Everything here is a pure function;
// medians (not means) are used throughout because scheduler noise on shared
// systems makes means fragile.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bk/common.hpp"
#include "bk/records.hpp"

namespace bk::analysis {

// Median of the sorted values; an even count averages the middle two.
inline double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty set");
    std::sort(values.begin(), values.end());
    size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

// ---------------------------------------------------------------------------
// Findings.
// ---------------------------------------------------------------------------

enum class FindingKind { regression, improvement, idle_tail, high_initial_memory, none };

inline std::string to_string(FindingKind k) {
    switch (k) {
        case FindingKind::regression: return "regression";
        case FindingKind::improvement: return "improvement";
        case FindingKind::idle_tail: return "idle-tail";
        case FindingKind::high_initial_memory: return "high-initial-memory";
        case FindingKind::none: return "none";
    }
    return "none";
}

// Evidence carries exactly the fields of the stated kind:
//   regression / improvement / none (step comparison):
//     median_before, median_after, n_before, n_after, delta, split
//     (split is either {"event_time": rfc3339} or {"change_point_index": k})
//   idle-tail: t_star_seconds, t_star_index, idle_nodes, busy_nodes,
//     u_idle, u_busy, idle_fraction
//   high-initial-memory: flagged_nodes, initial_fractions, threshold_fraction,
//     window_samples
struct Finding {
    FindingKind kind = FindingKind::none;
    double severity = 1.0;
    nlohmann::json evidence = nlohmann::json::object();
};

inline nlohmann::json to_json(const Finding& f) {
    nlohmann::json j;
    j["kind"] = to_string(f.kind);
    j["severity"] = std::isfinite(f.severity) ? nlohmann::json(round6(f.severity))
                                              : nlohmann::json(nullptr);
    j["evidence"] = f.evidence;
    return j;
}

// ---------------------------------------------------------------------------
// Metric series.
// ---------------------------------------------------------------------------

struct MetricSeries {
    // (UTC micros, value), strictly increasing timestamps.
    std::vector<std::pair<int64_t, double>> points;

    void validate() const {
        if (points.empty()) throw ValidationError("metric series must be non-empty");
        for (size_t i = 0; i < points.size(); ++i) {
            if (!std::isfinite(points[i].second))
                throw ValidationError("metric series value not finite at index " +
                                      std::to_string(i));
            if (i > 0 && points[i].first <= points[i - 1].first)
                throw ValidationError("metric series timestamps must strictly increase");
        }
    }
};

// Builds the per-configuration series for one metric out of succeeded
// records, ordered by start time.
inline MetricSeries series_from_records(const std::vector<RunRecord>& records,
                                        const std::string& metric) {
    std::vector<const RunRecord*> sorted;
    for (const RunRecord& r : records)
        if (r.state == RunState::succeeded) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const RunRecord* a, const RunRecord* b) {
        return a->started_at != b->started_at ? a->started_at < b->started_at
                                              : a->run_id < b->run_id;
    });
    MetricSeries s;
    for (const RunRecord* r : sorted) {
        auto it = r->metrics.find(metric);
        if (it == r->metrics.end())
            throw ValidationError("run " + r->run_id + " lacks metric '" + metric + "'");
        s.points.emplace_back(r->started_at, it->second);
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Strong scaling.
// ---------------------------------------------------------------------------

struct ScalingRow {
    int64_t p = 0;
    size_t n_runs = 0;
    double median_elapsed_seconds = 0.0;
    std::optional<double> median_energy_joules;
    double speedup = 1.0;
    double efficiency = 1.0;
};

inline int64_t parse_node_count(const std::string& value) {
    if (value.empty() || !std::all_of(value.begin(), value.end(), [](char c) {
            return std::isdigit(static_cast<unsigned char>(c));
        }))
        throw ValidationError("node count '" + value + "' is not a positive integer");
    int64_t p = 0;
    try {
        p = std::stoll(value);
    } catch (const std::exception&) {
        throw ValidationError("node count '" + value + "' out of range");
    }
    if (p < 1) throw ValidationError("node count must be positive");
    return p;
}

// One row per distinct node count, ascending. speedup(p) =
// median(p_ref)/median(p), efficiency(p) = speedup(p) * p_ref / p; at
// p = p_ref both are exactly 1.
inline std::vector<ScalingRow> scaling_table(const std::vector<RunRecord>& records,
                                             const std::string& metric,
                                             const std::string& node_param, int64_t p_ref,
                                             const std::string& energy_metric = "") {
    std::map<int64_t, std::vector<double>> elapsed_by_p;
    std::map<int64_t, std::vector<double>> energy_by_p;
    for (const RunRecord& r : records) {
        if (r.state != RunState::succeeded)
            throw ValidationError("run " + r.run_id + " did not succeed");
        auto param = r.params.find(node_param);
        if (param == r.params.end())
            throw ValidationError("run " + r.run_id + " lacks node param '" + node_param + "'");
        int64_t p = parse_node_count(param->second);
        auto m = r.metrics.find(metric);
        if (m == r.metrics.end())
            throw ValidationError("run " + r.run_id + " lacks metric '" + metric + "'");
        elapsed_by_p[p].push_back(m->second);
        if (!energy_metric.empty()) {
            auto e = r.metrics.find(energy_metric);
            if (e != r.metrics.end()) energy_by_p[p].push_back(e->second);
        }
    }
    if (elapsed_by_p.empty()) throw ValidationError("no records to tabulate");
    if (!elapsed_by_p.count(p_ref))
        throw ValidationError("reference node count " + std::to_string(p_ref) +
                              " absent from the records");

    double ref_median = median(elapsed_by_p.at(p_ref));
    std::vector<ScalingRow> rows;
    for (const auto& [p, values] : elapsed_by_p) {
        ScalingRow row;
        row.p = p;
        row.n_runs = values.size();
        row.median_elapsed_seconds = median(values);
        if (auto it = energy_by_p.find(p); it != energy_by_p.end())
            row.median_energy_joules = median(it->second);
        row.speedup = ref_median / row.median_elapsed_seconds;
        row.efficiency = row.speedup * static_cast<double>(p_ref) / static_cast<double>(p);
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Step detection around a known event.
// ---------------------------------------------------------------------------

// Compares the medians strictly before and at/after event_time. Higher is
// worse for elapsed/energy metrics, so kind = regression when
// m_after > m_before * (1 + delta).
inline Finding detect_step(const MetricSeries& series, int64_t event_time, double delta = 0.05,
                           size_t min_samples_per_side = 3) {
    series.validate();
    std::vector<double> before, after;
    for (const auto& [t, v] : series.points) (t < event_time ? before : after).push_back(v);
    if (before.size() < min_samples_per_side)
        throw ValidationError("insufficient samples strictly before the event: " +
                              std::to_string(before.size()) + " < " +
                              std::to_string(min_samples_per_side));
    if (after.size() < min_samples_per_side)
        throw ValidationError("insufficient samples at/after the event: " +
                              std::to_string(after.size()) + " < " +
                              std::to_string(min_samples_per_side));

    double m_before = median(before);
    double m_after = median(after);
    Finding f;
    if (m_after > m_before * (1.0 + delta)) f.kind = FindingKind::regression;
    else if (m_after < m_before * (1.0 - delta)) f.kind = FindingKind::improvement;
    else f.kind = FindingKind::none;
    f.severity = m_before != 0 ? m_after / m_before
                               : (m_after == 0 ? 1.0 : std::numeric_limits<double>::infinity());
    f.evidence = {{"median_before", round6(m_before)},
                  {"median_after", round6(m_after)},
                  {"n_before", before.size()},
                  {"n_after", after.size()},
                  {"delta", delta},
                  {"split", {{"event_time", format_rfc3339(event_time)}}}};
    return f;
}

// ---------------------------------------------------------------------------
// Two-segment least-squares change point.
// ---------------------------------------------------------------------------

// Returns the prefix length k in [2, n-2] minimizing SSE(prefix) +
// SSE(suffix), provided the best split beats the single-segment SSE by a
// relative margin of at least 0.2; ties break toward the smallest k. The
// argmin is invariant under y -> a*y + b with a > 0.
inline std::optional<size_t> find_change_point(const MetricSeries& series,
                                               double min_relative_gain = 0.2) {
    series.validate();
    size_t n = series.points.size();
    if (n < 4) throw ValidationError("change-point search needs at least 4 points");

    std::vector<double> prefix_sum(n + 1, 0.0), prefix_sq(n + 1, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double v = series.points[i].second;
        prefix_sum[i + 1] = prefix_sum[i] + v;
        prefix_sq[i + 1] = prefix_sq[i] + v * v;
    }
    auto sse = [&](size_t begin, size_t end) {  // [begin, end)
        double len = static_cast<double>(end - begin);
        double sum = prefix_sum[end] - prefix_sum[begin];
        double sq = prefix_sq[end] - prefix_sq[begin];
        return std::max(0.0, sq - sum * sum / len);
    };

    double whole = sse(0, n);
    if (whole <= 0) return std::nullopt;
    size_t best_k = 0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t k = 2; k + 2 <= n; ++k) {
        double split = sse(0, k) + sse(k, n);
        if (split < best) {
            best = split;
            best_k = k;
        }
    }
    if ((whole - best) / whole < min_relative_gain) return std::nullopt;
    return best_k;
}

// Change-point driven variant of detect_step for series without a logged
// event: locate the split, then compare the two segments the same way.
inline Finding detect_step_auto(const MetricSeries& series, double delta = 0.05) {
    std::optional<size_t> k = find_change_point(series);
    Finding f;
    if (!k) {
        f.kind = FindingKind::none;
        f.severity = 1.0;
        f.evidence = {{"reason", "no change point"}};
        return f;
    }
    std::vector<double> before, after;
    for (size_t i = 0; i < series.points.size(); ++i)
        (i < *k ? before : after).push_back(series.points[i].second);
    double m_before = median(before);
    double m_after = median(after);
    if (m_after > m_before * (1.0 + delta)) f.kind = FindingKind::regression;
    else if (m_after < m_before * (1.0 - delta)) f.kind = FindingKind::improvement;
    else f.kind = FindingKind::none;
    f.severity = m_before != 0 ? m_after / m_before
                               : (m_after == 0 ? 1.0 : std::numeric_limits<double>::infinity());
    f.evidence = {{"median_before", round6(m_before)},
                  {"median_after", round6(m_after)},
                  {"n_before", before.size()},
                  {"n_after", after.size()},
                  {"delta", delta},
                  {"split", {{"change_point_index", *k}}}};
    return f;
}

// ---------------------------------------------------------------------------
// Node telemetry and the two anomaly patterns.
// ---------------------------------------------------------------------------

struct NodeTelemetry {
    std::string node_id;
    std::vector<double> gpu_util;   // in [0, 1]
    std::vector<double> mem_bytes;  // >= 0
    double node_mem_capacity_bytes = 0;
};

struct JobTelemetry {
    double duration_seconds = 0;
    double sample_period_seconds = 0;
    std::vector<NodeTelemetry> nodes;

    size_t samples() const {
        return static_cast<size_t>(std::floor(duration_seconds / sample_period_seconds));
    }

    void validate() const {
        if (duration_seconds <= 0 || sample_period_seconds <= 0)
            throw ValidationError("telemetry duration and sample period must be positive");
        size_t expect = samples();
        if (expect < 1) throw ValidationError("telemetry holds no samples");
        if (nodes.empty()) throw ValidationError("telemetry lists no nodes");
        for (const NodeTelemetry& node : nodes) {
            if (node.gpu_util.size() != expect || node.mem_bytes.size() != expect)
                throw ValidationError("telemetry series length mismatch on node '" +
                                      node.node_id + "': expected " + std::to_string(expect));
            for (double u : node.gpu_util)
                if (!(u >= 0.0 && u <= 1.0))
                    throw ValidationError("gpu_util outside [0,1] on node '" + node.node_id +
                                          "'");
            for (double m : node.mem_bytes)
                if (!(m >= 0.0))
                    throw ValidationError("negative mem_bytes on node '" + node.node_id + "'");
            if (!(node.node_mem_capacity_bytes > 0))
                throw ValidationError("node_mem_capacity_bytes must be positive on node '" +
                                      node.node_id + "'");
        }
    }
};

inline JobTelemetry telemetry_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("telemetry must be a JSON object");
    JobTelemetry t;
    t.duration_seconds = j.at("duration_seconds").get<double>();
    t.sample_period_seconds = j.at("sample_period_seconds").get<double>();
    for (const auto& nj : j.at("nodes")) {
        NodeTelemetry node;
        node.node_id = nj.at("node_id").get<std::string>();
        node.gpu_util = nj.at("gpu_util").get<std::vector<double>>();
        node.mem_bytes = nj.at("mem_bytes").get<std::vector<double>>();
        node.node_mem_capacity_bytes = nj.at("node_mem_capacity_bytes").get<double>();
        t.nodes.push_back(std::move(node));
    }
    t.validate();
    return t;
}

inline JobTelemetry parse_telemetry(const std::string& text) {
    try {
        return telemetry_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("corrupt telemetry JSON: ") + e.what());
    }
}

// The idle-tail pattern: from some sample t* on, at least idle_fraction of
// the nodes stay below u_idle while at least one straggler keeps a mean
// utilization of u_busy or more. Reported only when the tail starts early
// enough (t*/duration <= tail_fraction_max) to be an anomaly rather than a
// normal wind-down.
inline Finding detect_idle_tail(const JobTelemetry& t, double u_idle = 0.05,
                                double u_busy = 0.5, double idle_fraction = 0.75,
                                double tail_fraction_max = 0.9) {
    t.validate();
    if (t.nodes.size() < 2)
        throw ValidationError("idle-tail detection needs at least 2 nodes");
    size_t len = t.samples();
    size_t n_nodes = t.nodes.size();

    // idle_from[i]: the earliest index from which node i stays below u_idle.
    std::vector<size_t> idle_from(n_nodes, len);
    for (size_t i = 0; i < n_nodes; ++i) {
        size_t s = len;
        while (s > 0 && t.nodes[i].gpu_util[s - 1] < u_idle) --s;
        idle_from[i] = s;
    }
    // suffix_mean[i][k]: mean utilization of node i over [k, len).
    std::vector<std::vector<double>> suffix_sum(n_nodes, std::vector<double>(len + 1, 0.0));
    for (size_t i = 0; i < n_nodes; ++i)
        for (size_t k = len; k > 0; --k)
            suffix_sum[i][k - 1] = suffix_sum[i][k] + t.nodes[i].gpu_util[k - 1];

    for (size_t t_star = 0; t_star < len; ++t_star) {
        size_t idle_count = 0;
        for (size_t i = 0; i < n_nodes; ++i)
            if (idle_from[i] <= t_star) ++idle_count;
        if (static_cast<double>(idle_count) <
            idle_fraction * static_cast<double>(n_nodes))
            continue;
        std::vector<std::string> busy_ids;
        for (size_t i = 0; i < n_nodes; ++i) {
            double mean = suffix_sum[i][t_star] / static_cast<double>(len - t_star);
            if (mean >= u_busy) busy_ids.push_back(t.nodes[i].node_id);
        }
        if (busy_ids.empty()) continue;

        double t_star_seconds = static_cast<double>(t_star) * t.sample_period_seconds;
        Finding f;
        if (t_star_seconds / t.duration_seconds > tail_fraction_max) {
            f.kind = FindingKind::none;
            f.severity = 1.0;
            f.evidence = {{"t_star_seconds", t_star_seconds},
                          {"reason", "tail starts too late to be anomalous"}};
            return f;
        }
        std::vector<std::string> idle_ids;
        for (size_t i = 0; i < n_nodes; ++i)
            if (idle_from[i] <= t_star) idle_ids.push_back(t.nodes[i].node_id);
        f.kind = FindingKind::idle_tail;
        f.severity = (t.duration_seconds - t_star_seconds) / t.duration_seconds;
        f.evidence = {{"t_star_seconds", t_star_seconds},
                      {"t_star_index", t_star},
                      {"idle_nodes", idle_ids},
                      {"busy_nodes", busy_ids},
                      {"u_idle", u_idle},
                      {"u_busy", u_busy},
                      {"idle_fraction", idle_fraction}};
        return f;
    }
    Finding f;
    f.kind = FindingKind::none;
    f.severity = 1.0;
    f.evidence = nlohmann::json::object();
    return f;
}

// The initial-memory pattern: a node whose memory is already high when the
// job starts, before any input could have been loaded.
inline Finding detect_initial_memory(const JobTelemetry& t, double threshold_fraction = 0.25,
                                     size_t window_samples = 3) {
    t.validate();
    if (window_samples < 1) throw ValidationError("window_samples must be at least 1");
    size_t window = std::min(window_samples, t.samples());

    std::vector<std::string> flagged;
    nlohmann::json fractions = nlohmann::json::object();
    double worst = 0.0;
    for (const NodeTelemetry& node : t.nodes) {
        double sum = 0;
        for (size_t k = 0; k < window; ++k) sum += node.mem_bytes[k];
        double fraction = sum / static_cast<double>(window) / node.node_mem_capacity_bytes;
        worst = std::max(worst, fraction);
        if (fraction > threshold_fraction) {
            flagged.push_back(node.node_id);
            fractions[node.node_id] = round6(fraction);
        }
    }
    Finding f;
    if (flagged.empty()) {
        f.kind = FindingKind::none;
        f.severity = worst;
        f.evidence = nlohmann::json::object();
        return f;
    }
    f.kind = FindingKind::high_initial_memory;
    f.severity = worst;
    f.evidence = {{"flagged_nodes", flagged},
                  {"initial_fractions", fractions},
                  {"threshold_fraction", threshold_fraction},
                  {"window_samples", window}};
    return f;
}

}  // namespace bk::analysis
