// bk: the harness command line. Subcommands wire the library into the
// benchmarking workflow: expand a spec into its run matrix, run it through
// an executor, report scaling tables and plots, detect regressions, and
// manage machine events.
//
// Exit statuses: 0 success (and no regression findings), 1 operational
// failure or a regression found, 2 usage or validation errors.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bk/analysis.hpp"
#include "bk/common.hpp"
#include "bk/orchestrator.hpp"
#include "bk/records.hpp"
#include "bk/report.hpp"
#include "bk/specmatrix.hpp"
#include "bk/store.hpp"

namespace {

namespace sm = bk::specmatrix;
namespace orch = bk::orchestrator;

sm::BenchmarkSpec load_spec(const std::string& path) {
    return sm::parse_spec(bk::read_file(path));
}

int cmd_expand(const std::string& spec_path) {
    sm::BenchmarkSpec spec = load_spec(spec_path);
    for (const sm::Configuration& config : sm::expand(spec)) {
        std::cout << config.index;
        for (const sm::Param& p : spec.params)
            std::cout << (p.name == spec.params.front().name ? "\t" : " ") << p.name << "="
                      << config.assignment.at(p.name);
        std::cout << "\n";
    }
    return 0;
}

int cmd_run(const std::string& spec_path, const std::string& store_root,
            const std::string& machine, size_t max_parallel, const std::string& executor_sel) {
    sm::BenchmarkSpec spec;
    std::unique_ptr<bk::store::Store> store;
    std::unique_ptr<orch::Executor> executor;
    std::vector<orch::RunPlan> plans;
    try {
        spec = load_spec(spec_path);
        store = std::make_unique<bk::store::Store>(store_root);
        store->check_writable();
        if (executor_sel == "local") {
            executor = std::make_unique<orch::LocalExecutor>();
        } else if (executor_sel.rfind("simulated:", 0) == 0) {
            executor = std::make_unique<orch::SimulatedExecutor>(
                orch::load_scenario(executor_sel.substr(10)));
        } else {
            std::cerr << "error: unknown executor '" << executor_sel
                      << "' (expected local or simulated:<scenario path>)\n";
            return 2;
        }
        plans = orch::plan(spec, sm::expand(spec), machine);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    std::vector<bk::RunRecord> records;
    try {
        records = orch::execute_all(plans, spec, *executor, *store, max_parallel);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    bool all_ok = true;
    for (const bk::RunRecord& r : records) {
        std::cout << r.run_id << "\t" << to_string(r.state) << "\texit="
                  << (r.exit_status ? std::to_string(*r.exit_status) : "-") << "\t"
                  << r.artifact_dir << "\n";
        all_ok = all_ok && r.state == bk::RunState::succeeded;
    }
    return all_ok ? 0 : 1;
}

int cmd_report(const std::string& store_root, const std::string& spec_name,
               const std::string& metric, const std::string& node_param,
               const std::string& out_dir, int64_t p_ref, const std::string& energy_metric) {
    bk::store::Store store(store_root);
    bk::store::Query all;
    all.spec_name = spec_name;
    std::vector<bk::RunRecord> records = store.query(all);

    bk::store::Query ok = all;
    ok.states = std::set<bk::RunState>{bk::RunState::succeeded};
    std::vector<bk::RunRecord> succeeded = store.query(ok);
    if (succeeded.empty()) {
        std::cerr << "error: no succeeded records for spec '" << spec_name << "'\n";
        return 1;
    }

    if (p_ref == 0) {
        int64_t min_p = 0;
        for (const bk::RunRecord& r : succeeded) {
            auto it = r.params.find(node_param);
            if (it == r.params.end()) continue;
            int64_t p = bk::analysis::parse_node_count(it->second);
            if (min_p == 0 || p < min_p) min_p = p;
        }
        p_ref = min_p;
    }

    std::vector<bk::analysis::ScalingRow> rows =
        bk::analysis::scaling_table(succeeded, metric, node_param, p_ref, energy_metric);
    std::cout << bk::report::format_scaling_table(rows);

    bk::report::ReportArtifacts artifacts =
        bk::report::render_report(records, store.list_events(), node_param, energy_metric);
    std::filesystem::create_directories(out_dir);
    bk::write_file(out_dir + "/report.csv", artifacts.csv);
    bk::write_file(out_dir + "/report.svg", artifacts.svg);
    return 0;
}

int cmd_detect(const std::string& store_root, const std::string& spec_name,
               const std::string& metric, const std::optional<std::string>& event_time,
               bool auto_mode, double delta, size_t min_samples) {
    bk::store::Store store(store_root);
    bk::store::Query q;
    q.spec_name = spec_name;
    q.states = std::set<bk::RunState>{bk::RunState::succeeded};
    std::vector<bk::RunRecord> records = store.query(q);

    std::map<std::string, std::vector<bk::RunRecord>> groups;  // keyed by rendered assignment
    std::map<std::string, nlohmann::json> group_config;
    for (bk::RunRecord& r : records) {
        nlohmann::json cfg(r.params);
        std::string key = cfg.dump();
        group_config[key] = cfg;
        groups[key].push_back(std::move(r));
    }
    if (groups.empty()) {
        std::cerr << "error: no succeeded records for spec '" << spec_name << "'\n";
        return 2;
    }

    int64_t event_micros = 0;
    if (event_time) event_micros = bk::parse_rfc3339(*event_time);

    bool regression_found = false;
    for (const auto& [key, group] : groups) {
        bk::analysis::Finding finding;
        try {
            bk::analysis::MetricSeries series =
                bk::analysis::series_from_records(group, metric);
            finding = auto_mode
                          ? bk::analysis::detect_step_auto(series, delta)
                          : bk::analysis::detect_step(series, event_micros, delta, min_samples);
        } catch (const bk::Error& e) {
            std::cerr << "error: configuration " << key << ": " << e.what() << "\n";
            return 2;
        }
        nlohmann::json line = to_json(finding);
        line["spec_name"] = spec_name;
        line["configuration"] = group_config[key];
        line["metric"] = metric;
        std::cout << line.dump() << "\n";
        regression_found =
            regression_found || finding.kind == bk::analysis::FindingKind::regression;
    }
    return regression_found ? 1 : 0;
}

int cmd_events_add(const std::string& store_root, const std::string& time,
                   const std::string& label, const std::string& machine) {
    bk::store::Store store(store_root);
    bk::EventRecord event;
    event.timestamp = bk::parse_rfc3339(time);
    event.label = label;
    event.machine_label = machine;
    store.append_event(event);
    return 0;
}

int cmd_events_list(const std::string& store_root, const std::optional<std::string>& from,
                    const std::optional<std::string>& to,
                    const std::optional<std::string>& machine) {
    bk::store::Store store(store_root);
    std::optional<int64_t> from_micros, to_micros;
    if (from) from_micros = bk::parse_rfc3339(*from);
    if (to) to_micros = bk::parse_rfc3339(*to);
    for (const bk::EventRecord& e : store.list_events(from_micros, to_micros, machine)) {
        std::cout << bk::format_rfc3339(e.timestamp) << "\t" << e.machine_label << "\t"
                  << e.label << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bk - continuous benchmarking harness"};
    app.require_subcommand(1);

    // expand
    auto* expand_cmd = app.add_subcommand("expand", "print the expanded run matrix of a spec");
    std::string expand_spec;
    expand_cmd->add_option("spec", expand_spec, "benchmark spec file")->required();

    // run
    auto* run_cmd = app.add_subcommand("run", "plan and execute every configuration");
    std::string run_spec, run_store, run_machine = "local", run_executor = "local";
    size_t run_parallel = 1;
    run_cmd->add_option("spec", run_spec, "benchmark spec file")->required();
    run_cmd->add_option("--store", run_store, "store root (env BK_STORE)")
        ->envname("BK_STORE")
        ->required();
    run_cmd->add_option("--machine", run_machine, "machine label for the records");
    run_cmd->add_option("--max-parallel", run_parallel, "maximum concurrent runs")
        ->check(CLI::PositiveNumber);
    run_cmd->add_option("--executor", run_executor, "local or simulated:<scenario path>");

    // report
    auto* report_cmd = app.add_subcommand("report", "scaling table plus CSV/SVG artifacts");
    std::string rep_store, rep_spec, rep_metric = "elapsed_seconds", rep_node = "nodes";
    std::string rep_out = ".", rep_energy = "energy_joules";
    int64_t rep_pref = 0;
    report_cmd->add_option("--store", rep_store, "store root (env BK_STORE)")
        ->envname("BK_STORE")
        ->required();
    report_cmd->add_option("--spec", rep_spec, "spec name to report on")->required();
    report_cmd->add_option("--metric", rep_metric, "elapsed metric name");
    report_cmd->add_option("--node-param", rep_node, "param holding the node count");
    report_cmd->add_option("--out", rep_out, "output directory for report.csv/report.svg");
    report_cmd->add_option("--pref", rep_pref, "reference node count (default: smallest)");
    report_cmd->add_option("--energy-metric", rep_energy, "energy metric name");

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "regression findings as JSON lines");
    std::string det_store, det_spec, det_metric = "elapsed_seconds";
    std::optional<std::string> det_event;
    bool det_auto = false;
    double det_delta = 0.05;
    size_t det_min_samples = 3;
    detect_cmd->add_option("--store", det_store, "store root (env BK_STORE)")
        ->envname("BK_STORE")
        ->required();
    detect_cmd->add_option("--spec", det_spec, "spec name to analyze")->required();
    detect_cmd->add_option("--metric", det_metric, "metric to analyze");
    auto* ev_opt = detect_cmd->add_option("--event", det_event,
                                          "split at this RFC 3339 event time");
    auto* auto_flag = detect_cmd->add_flag("--auto", det_auto, "locate the change point");
    ev_opt->excludes(auto_flag);
    detect_cmd->add_option("--delta", det_delta, "relative step threshold");
    detect_cmd->add_option("--min-samples", det_min_samples, "samples required per side");

    // events
    auto* events_cmd = app.add_subcommand("events", "record and list machine events");
    events_cmd->require_subcommand(1);
    auto* ev_add = events_cmd->add_subcommand("add", "append one event");
    std::string eva_store, eva_time, eva_label, eva_machine = "local";
    ev_add->add_option("--store", eva_store, "store root (env BK_STORE)")
        ->envname("BK_STORE")
        ->required();
    ev_add->add_option("--time", eva_time, "RFC 3339 timestamp")->required();
    ev_add->add_option("--label", eva_label, "event label")->required();
    ev_add->add_option("--machine", eva_machine, "machine label");
    auto* ev_list = events_cmd->add_subcommand("list", "list events");
    std::string evl_store;
    std::optional<std::string> evl_from, evl_to, evl_machine;
    ev_list->add_option("--store", evl_store, "store root (env BK_STORE)")
        ->envname("BK_STORE")
        ->required();
    ev_list->add_option("--from", evl_from, "inclusive lower bound (RFC 3339)");
    ev_list->add_option("--to", evl_to, "exclusive upper bound (RFC 3339)");
    ev_list->add_option("--machine", evl_machine, "filter by machine label");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (expand_cmd->parsed()) return cmd_expand(expand_spec);
        if (run_cmd->parsed())
            return cmd_run(run_spec, run_store, run_machine, run_parallel, run_executor);
        if (report_cmd->parsed())
            return cmd_report(rep_store, rep_spec, rep_metric, rep_node, rep_out, rep_pref,
                              rep_energy);
        if (detect_cmd->parsed())
            return cmd_detect(det_store, det_spec, det_metric, det_event, det_auto, det_delta,
                              det_min_samples);
        if (events_cmd->parsed()) {
            if (ev_add->parsed()) return cmd_events_add(eva_store, eva_time, eva_label, eva_machine);
            return cmd_events_list(evl_store, evl_from, evl_to, evl_machine);
        }
    } catch (const bk::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
