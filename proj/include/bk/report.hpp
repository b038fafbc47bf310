#pragma once

// Deterministic report artifacts: an RFC 4180 CSV and an SVG 1.1 scatter
// plot (fixed 800x500 viewBox). Crosses show elapsed time against the left
// axis, circles show energy against the right axis, the x axis groups runs
// by node count, recency maps to color lightness, and each machine event
// becomes one dashed vertical line. Equal inputs produce byte-identical
// output: fixed ordering, fixed numeric formatting, nothing derived from
// the generation time.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bk/analysis.hpp"
#include "bk/common.hpp"
#include "bk/records.hpp"

namespace bk::report {

struct ReportArtifacts {
    std::string csv;
    std::string svg;
};

namespace detail {

inline std::string csv_field(const std::string& raw) {
    if (raw.find_first_of(",\"\r\n") == std::string::npos) return raw;
    std::string out = "\"";
    for (char c : raw) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

inline std::string svg_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

struct PlottedRun {
    const RunRecord* record;
    int64_t p;
    std::optional<double> energy;
    int lightness;  // percent, 20 (oldest) .. 65 (newest)
};

}  // namespace detail

inline ReportArtifacts render_report(const std::vector<RunRecord>& records,
                                     const std::vector<EventRecord>& events,
                                     const std::string& node_param,
                                     const std::string& energy_metric = "energy_joules") {
    if (records.empty()) throw ValidationError("nothing to report: no records");

    std::vector<detail::PlottedRun> runs;
    runs.reserve(records.size());
    for (const RunRecord& r : records) {
        auto it = r.params.find(node_param);
        if (it == r.params.end())
            throw ValidationError("run " + r.run_id + " lacks node param '" + node_param + "'");
        detail::PlottedRun pr;
        pr.record = &r;
        pr.p = analysis::parse_node_count(it->second);
        if (auto m = r.metrics.find(energy_metric); m != r.metrics.end()) pr.energy = m->second;
        pr.lightness = 42;
        runs.push_back(pr);
    }
    std::sort(runs.begin(), runs.end(),
              [](const detail::PlottedRun& a, const detail::PlottedRun& b) {
                  if (a.record->started_at != b.record->started_at)
                      return a.record->started_at < b.record->started_at;
                  return a.record->run_id < b.record->run_id;
              });

    // recency -> lightness over the distinct start times
    std::vector<int64_t> stamps;
    for (const auto& r : runs) stamps.push_back(r.record->started_at);
    std::sort(stamps.begin(), stamps.end());
    stamps.erase(std::unique(stamps.begin(), stamps.end()), stamps.end());
    for (auto& r : runs) {
        size_t rank = static_cast<size_t>(
            std::lower_bound(stamps.begin(), stamps.end(), r.record->started_at) -
            stamps.begin());
        r.lightness = stamps.size() > 1
                          ? 20 + static_cast<int>(45.0 * static_cast<double>(rank) /
                                                  static_cast<double>(stamps.size() - 1))
                          : 42;
    }

    // ---- CSV ----
    std::string csv = "p,started_at,elapsed_seconds,energy_joules,state\r\n";
    for (const auto& r : runs) {
        csv += detail::csv_field(std::to_string(r.p)) + ",";
        csv += detail::csv_field(format_rfc3339(r.record->started_at)) + ",";
        csv += detail::csv_field(format_fixed6(r.record->elapsed_seconds)) + ",";
        csv += r.energy ? detail::csv_field(format_fixed6(*r.energy)) : "";
        csv += ",";
        csv += detail::csv_field(to_string(r.record->state)) + "\r\n";
    }

    // ---- SVG ---- (fixed 800x500 canvas)
    const double left = 70, right = 730, top = 30, bottom = 440;

    double max_elapsed = 0, max_energy = 0;
    for (const auto& r : runs) {
        max_elapsed = std::max(max_elapsed, r.record->elapsed_seconds);
        if (r.energy) max_energy = std::max(max_energy, *r.energy);
    }
    if (max_elapsed <= 0) max_elapsed = 1;
    if (max_energy <= 0) max_energy = 1;
    auto y_elapsed = [&](double v) { return bottom - (v / (max_elapsed * 1.05)) * (bottom - top); };
    auto y_energy = [&](double v) { return bottom - (v / (max_energy * 1.05)) * (bottom - top); };

    std::vector<int64_t> groups;
    for (const auto& r : runs) groups.push_back(r.p);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    double band = (right - left) / static_cast<double>(groups.size());

    std::map<int64_t, size_t> group_sizes;
    for (const auto& r : runs) ++group_sizes[r.p];
    std::map<int64_t, size_t> group_seen;
    auto x_of = [&](const detail::PlottedRun& r) {
        size_t gi = static_cast<size_t>(
            std::lower_bound(groups.begin(), groups.end(), r.p) - groups.begin());
        double center = left + band * (static_cast<double>(gi) + 0.5);
        size_t m = group_sizes[r.p];
        size_t j = group_seen[r.p]++;
        double spacing = std::min(12.0, band * 0.8 / static_cast<double>(std::max<size_t>(m, 1)));
        return center + (static_cast<double>(j) - static_cast<double>(m - 1) / 2.0) * spacing;
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
           "viewBox=\"0 0 800 500\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
    // axes
    svg += "<line class=\"axis\" x1=\"" + detail::svg_num(left) + "\" y1=\"" +
           detail::svg_num(bottom) + "\" x2=\"" + detail::svg_num(right) + "\" y2=\"" +
           detail::svg_num(bottom) + "\" stroke=\"black\"/>\n";
    svg += "<line class=\"axis\" x1=\"" + detail::svg_num(left) + "\" y1=\"" +
           detail::svg_num(top) + "\" x2=\"" + detail::svg_num(left) + "\" y2=\"" +
           detail::svg_num(bottom) + "\" stroke=\"black\"/>\n";
    svg += "<line class=\"axis\" x1=\"" + detail::svg_num(right) + "\" y1=\"" +
           detail::svg_num(top) + "\" x2=\"" + detail::svg_num(right) + "\" y2=\"" +
           detail::svg_num(bottom) + "\" stroke=\"black\"/>\n";
    // axis captions and scale extremes
    svg += "<text x=\"" + detail::svg_num((left + right) / 2) +
           "\" y=\"478\" text-anchor=\"middle\" font-size=\"13\">nodes</text>\n";
    svg += "<text x=\"" + detail::svg_num(left - 8) + "\" y=\"" + detail::svg_num(top + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + format_decimal(max_elapsed * 1.05) +
           " s</text>\n";
    svg += "<text x=\"" + detail::svg_num(right + 8) + "\" y=\"" + detail::svg_num(top + 4) +
           "\" text-anchor=\"start\" font-size=\"11\">" + format_decimal(max_energy * 1.05) +
           " J</text>\n";
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        double cx = left + band * (static_cast<double>(gi) + 0.5);
        svg += "<text class=\"group-label\" x=\"" + detail::svg_num(cx) +
               "\" y=\"458\" text-anchor=\"middle\" font-size=\"12\">" +
               std::to_string(groups[gi]) + "</text>\n";
    }

    // event lines: mapped over the runs' time range
    int64_t t_min = runs.front().record->started_at;
    int64_t t_max = runs.back().record->started_at;
    std::vector<EventRecord> sorted_events = events;
    std::sort(sorted_events.begin(), sorted_events.end(),
              [](const EventRecord& a, const EventRecord& b) {
                  return a.timestamp != b.timestamp ? a.timestamp < b.timestamp
                                                    : a.label < b.label;
              });
    for (const EventRecord& e : sorted_events) {
        double x;
        if (t_max == t_min) {
            x = (left + right) / 2;
        } else {
            double frac = static_cast<double>(e.timestamp - t_min) /
                          static_cast<double>(t_max - t_min);
            x = left + frac * (right - left);
        }
        x = std::clamp(x, left, right);
        svg += "<line class=\"event-line\" x1=\"" + detail::svg_num(x) + "\" y1=\"" +
               detail::svg_num(top) + "\" x2=\"" + detail::svg_num(x) + "\" y2=\"" +
               detail::svg_num(bottom) +
               "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
    }

    // crosses: elapsed, left axis
    for (const auto& r : runs) {
        double x = x_of(r);
        double y = y_elapsed(r.record->elapsed_seconds);
        std::string color = "hsl(210,80%," + std::to_string(r.lightness) + "%)";
        svg += "<path class=\"run-elapsed\" d=\"M" + detail::svg_num(x - 4) + " " +
               detail::svg_num(y - 4) + " L" + detail::svg_num(x + 4) + " " +
               detail::svg_num(y + 4) + " M" + detail::svg_num(x - 4) + " " +
               detail::svg_num(y + 4) + " L" + detail::svg_num(x + 4) + " " +
               detail::svg_num(y - 4) + "\" stroke=\"" + color +
               "\" stroke-width=\"2\" fill=\"none\"/>\n";
    }
    // circles: energy, right axis
    group_seen.clear();
    for (const auto& r : runs) {
        double x = x_of(r);
        if (!r.energy) continue;
        double y = y_energy(*r.energy);
        std::string color = "hsl(30,90%," + std::to_string(r.lightness) + "%)";
        svg += "<circle class=\"run-energy\" cx=\"" + detail::svg_num(x) + "\" cy=\"" +
               detail::svg_num(y) + "\" r=\"5\" stroke=\"" + color +
               "\" stroke-width=\"2\" fill=\"none\"/>\n";
    }
    svg += "</svg>\n";

    return {std::move(csv), std::move(svg)};
}

// Plain-text scaling table for standard output.
inline std::string format_scaling_table(const std::vector<analysis::ScalingRow>& rows) {
    std::string out = "p\tn_runs\tmedian_elapsed_s\tmedian_energy_J\tspeedup\tefficiency\n";
    for (const auto& row : rows) {
        out += std::to_string(row.p) + "\t" + std::to_string(row.n_runs) + "\t" +
               format_decimal(row.median_elapsed_seconds) + "\t" +
               (row.median_energy_joules ? format_decimal(*row.median_energy_joules) : "-") +
               "\t" + format_decimal(row.speedup) + "\t" + format_decimal(row.efficiency) +
               "\n";
    }
    return out;
}

}  // namespace bk::report
