// Subprocess tests of the bk command line: exit-status taxonomy and the
// wiring of the subcommands.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "bk/analysis.hpp"
#include "bk/orchestrator.hpp"
#include "bk/records.hpp"
#include "bk/specmatrix.hpp"
#include "bk/store.hpp"
#include "helpers.hpp"

using bktest::ProcResult;
using bktest::run_cmd;
using bktest::TempDir;
namespace fs = std::filesystem;

namespace {

const std::string kCli = BK_CLI_BIN;
const std::string kWorkload = BK_WORKLOAD_BIN;

size_t line_count(const std::string& text) {
    size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

bk::RunRecord synthetic_run(const std::string& id, const std::string& nodes, int64_t started,
                            double elapsed) {
    bk::RunRecord r;
    r.run_id = id;
    r.spec_name = "synthetic";
    r.params = {{"nodes", nodes}};
    r.started_at = started;
    r.finished_at = started + 1000000;
    r.elapsed_seconds = elapsed;
    r.state = bk::RunState::succeeded;
    r.exit_status = 0;
    r.metrics = {{"elapsed_seconds", elapsed}};
    r.artifact_dir = "/tmp/s";
    r.machine_label = "m";
    return r;
}

// A store holding a +10% step around a logged maintenance event.
void build_step_store(const std::string& root, bool with_step) {
    bk::store::Store store(root);
    int64_t base = bk::parse_rfc3339("2025-09-01T00:00:00Z");
    int64_t day = 86400000000LL;
    std::vector<double> before = {99, 100, 101, 100, 100};
    std::vector<double> after = {110, 109.5, 111, 110, 110};
    for (size_t i = 0; i < before.size(); ++i)
        store.append(synthetic_run("pre-" + std::to_string(i), "4",
                                   base + static_cast<int64_t>(i) * day, before[i]));
    for (size_t i = 0; i < after.size(); ++i)
        store.append(synthetic_run("post-" + std::to_string(i), "4",
                                   base + static_cast<int64_t>(10 + i) * day,
                                   with_step ? after[i] : before[i]));
    store.append_event(bk::EventRecord{base + 7 * day, "maintenance", "m"});
}

}  // namespace

TEST_CASE("expand prints the matrix and honors the exit taxonomy") {
    TempDir dir;
    bk::write_file(dir.sub("matrix.bkspec"),
                   "benchmark \"matrix\"\n"
                   "param distro = rocky9, debian12\n"
                   "param mpi = mpich, openmpi\n"
                   "param device = cpu, gpu\n"
                   "exclude device=gpu && distro=rocky9\n"
                   "command = \"echo {distro}\"\n"
                   "estimate_seconds = 5\n");
    ProcResult r = run_cmd(kCli + " expand matrix.bkspec", dir.path());
    CHECK(r.exit_code == 0);
    CHECK(line_count(r.out) == 6);
    CHECK(r.out.find("device=gpu") != std::string::npos);

    bk::write_file(dir.sub("empty.bkspec"),
                   "benchmark \"empty\"\ncommand = \"true\"\nestimate_seconds = 1\n");
    ProcResult empty = run_cmd(kCli + " expand empty.bkspec", dir.path());
    CHECK(empty.exit_code == 0);
    CHECK(line_count(empty.out) == 1);

    bk::write_file(dir.sub("bad.bkspec"), "benchmark \"x\"\nfrobnicate\n");
    ProcResult bad = run_cmd(kCli + " expand bad.bkspec", dir.path());
    CHECK(bad.exit_code == 2);
    CHECK(bad.out.empty());
    CHECK(bad.err.find("line 2") != std::string::npos);

    CHECK(run_cmd(kCli + " expand /does/not/exist", dir.path()).exit_code == 2);
    CHECK(run_cmd(kCli + " nonsense", dir.path()).exit_code == 2);
    CHECK(run_cmd(kCli + " run", dir.path()).exit_code == 2);  // missing flags
}

TEST_CASE("run executes the workload end to end") {
    TempDir dir;
    bk::write_file(dir.sub("scale.bkspec"),
                   "benchmark \"scale\"\n"
                   "param n = 4, 6\n"
                   "command = \"" + kWorkload + " --generate 7 {n} guaranteed-convergent\"\n"
                   "metric elapsed_seconds from elapsed\n"
                   "metric iterations from file:metrics.json:iterations\n"
                   "estimate_seconds = 10\n"
                   "workdir_root = " + dir.sub("runs") + "\n");
    ProcResult r = run_cmd(kCli + " run scale.bkspec --store store --machine desk", dir.path());
    INFO(r.err);
    CHECK(r.exit_code == 0);
    CHECK(line_count(r.out) == 2);

    bk::store::Store store(dir.sub("store"));
    std::vector<bk::RunRecord> records = store.query_all();
    REQUIRE(records.size() == 2);
    for (const auto& rec : records) {
        CHECK(rec.state == bk::RunState::succeeded);
        CHECK(rec.spec_name == "scale");
        CHECK(rec.machine_label == "desk");
        CHECK(rec.metrics.count("iterations") == 1);
        CHECK(rec.metrics.at("iterations") >= 1);
        CHECK(fs::exists(rec.artifact_dir + "/record.json"));
        CHECK(fs::exists(rec.artifact_dir + "/metrics.json"));
    }
}

TEST_CASE("run maps failing and timing-out configurations to exit 1") {
    TempDir dir;
    bk::write_file(dir.sub("fail.bkspec"),
                   "benchmark \"fail\"\ncommand = \"exit 4\"\nestimate_seconds = 2\n"
                   "workdir_root = " + dir.sub("runs") + "\n");
    ProcResult failed = run_cmd(kCli + " run fail.bkspec --store store", dir.path());
    CHECK(failed.exit_code == 1);

    bk::write_file(dir.sub("scenario.json"),
                   R"({"behaviors": [{"outcome": "hang-forever"}]})");
    bk::write_file(dir.sub("hang.bkspec"),
                   "benchmark \"hang\"\ncommand = \"ignored\"\nestimate_seconds = 1\n"
                   "workdir_root = " + dir.sub("runs2") + "\n");
    ProcResult hung = run_cmd(kCli + " run hang.bkspec --store store --executor simulated:" +
                                  dir.sub("scenario.json"),
                              dir.path());
    CHECK(hung.exit_code == 1);

    bk::store::Store store(dir.sub("store"));
    bk::store::Query q;
    q.spec_name = "hang";
    std::vector<bk::RunRecord> records = store.query(q);
    REQUIRE(records.size() == 1);
    CHECK(records[0].state == bk::RunState::timeout);
}

TEST_CASE("run rejects bad invocations before starting anything") {
    TempDir dir;
    bk::write_file(dir.sub("broken.bkspec"), "benchmark \"x\"\nframboise\n");
    CHECK(run_cmd(kCli + " run broken.bkspec --store store", dir.path()).exit_code == 2);
    bk::write_file(dir.sub("ok.bkspec"),
                   "benchmark \"ok\"\ncommand = \"true\"\nestimate_seconds = 1\n"
                   "workdir_root = " + dir.sub("runs") + "\n");
    CHECK(run_cmd(kCli + " run ok.bkspec --store store --executor teleport", dir.path())
              .exit_code == 2);
    CHECK(run_cmd(kCli + " run ok.bkspec --store store --max-parallel 0", dir.path())
              .exit_code == 2);
    CHECK_FALSE(fs::exists(dir.sub("runs")));
}

TEST_CASE("run fails fast on an unusable store root") {
    TempDir dir;
    bk::write_file(dir.sub("occupied"), "not a directory\n");
    bk::write_file(dir.sub("ok.bkspec"),
                   "benchmark \"ok\"\ncommand = \"true\"\nestimate_seconds = 1\n"
                   "workdir_root = " + dir.sub("runs") + "\n");
    ProcResult r = run_cmd(kCli + " run ok.bkspec --store occupied", dir.path());
    CHECK(r.exit_code == 2);
    CHECK_FALSE(fs::exists(dir.sub("runs")));  // fail before planning
}

TEST_CASE("BK_STORE provides the store root") {
    TempDir dir;
    ProcResult add = run_cmd("BK_STORE=" + dir.sub("store") + " " + kCli +
                                 " events add --time 2025-09-09T00:00:00Z --label update",
                             dir.path());
    CHECK(add.exit_code == 0);
    ProcResult list = run_cmd(kCli + " events list --store " + dir.sub("store"), dir.path());
    CHECK(list.exit_code == 0);
    CHECK(list.out.find("update") != std::string::npos);

    // an explicit flag beats the environment
    ProcResult flagged = run_cmd("BK_STORE=" + dir.sub("ignored") + " " + kCli +
                                     " events add --store " + dir.sub("store") +
                                     " --time 2025-09-10T00:00:00Z --label second",
                                 dir.path());
    CHECK(flagged.exit_code == 0);
    CHECK_FALSE(fs::exists(dir.sub("ignored")));
    ProcResult both = run_cmd(kCli + " events list --store " + dir.sub("store"), dir.path());
    CHECK(line_count(both.out) == 2);
}

TEST_CASE("events add/list round trip and validation") {
    TempDir dir;
    std::string store_flag = " --store " + dir.sub("store");
    CHECK(run_cmd(kCli + " events add" + store_flag +
                      " --time 2025-09-09T00:00:00Z --label maintenance --machine clusterA",
                  dir.path())
              .exit_code == 0);
    ProcResult list = run_cmd(kCli + " events list" + store_flag, dir.path());
    CHECK(list.exit_code == 0);
    CHECK(line_count(list.out) == 1);
    CHECK(list.out.find("maintenance") != std::string::npos);

    ProcResult filtered = run_cmd(
        kCli + " events list" + store_flag + " --from 2025-09-10T00:00:00Z", dir.path());
    CHECK(filtered.exit_code == 0);
    CHECK(filtered.out.empty());

    CHECK(run_cmd(kCli + " events add" + store_flag + " --time yesterday --label x",
                  dir.path())
              .exit_code == 2);

    ProcResult empty_list =
        run_cmd(kCli + " events list --store " + dir.sub("empty-store"), dir.path());
    CHECK(empty_list.exit_code == 0);
    CHECK(empty_list.out.empty());
}

TEST_CASE("report writes deterministic artifacts and the scaling table") {
    TempDir dir;
    {
        bk::store::Store store(dir.sub("store"));
        int64_t base = bk::parse_rfc3339("2025-09-01T00:00:00Z");
        for (int i = 0; i < 3; ++i) {
            bk::RunRecord r =
                synthetic_run("p1-" + std::to_string(i), "1", base + i * 86400000000LL, 100.0 + i);
            r.metrics["energy_joules"] = 5000.0 + i;
            store.append(r);
        }
        for (int i = 0; i < 3; ++i)
            store.append(synthetic_run("p2-" + std::to_string(i), "2",
                                       base + (i + 3) * 86400000000LL, 55.0 + i));
        store.append_event(bk::EventRecord{base + 2 * 86400000000LL, "update", "m"});
    }
    std::string cmd = kCli + " report --store store --spec synthetic --metric elapsed_seconds"
                             " --node-param nodes --out out1";
    ProcResult first = run_cmd(cmd, dir.path());
    INFO(first.err);
    CHECK(first.exit_code == 0);
    CHECK(first.out.find("speedup") != std::string::npos);
    REQUIRE(fs::exists(dir.sub("out1/report.csv")));
    REQUIRE(fs::exists(dir.sub("out1/report.svg")));

    ProcResult second = run_cmd(kCli + " report --store store --spec synthetic"
                                       " --metric elapsed_seconds --node-param nodes --out out2",
                                dir.path());
    CHECK(second.exit_code == 0);
    CHECK(bk::read_file(dir.sub("out1/report.csv")) == bk::read_file(dir.sub("out2/report.csv")));
    CHECK(bk::read_file(dir.sub("out1/report.svg")) == bk::read_file(dir.sub("out2/report.svg")));
    CHECK(first.out == second.out);

    // only-failed stores cannot be reported
    {
        bk::store::Store store(dir.sub("failed-store"));
        bk::RunRecord r = synthetic_run("f", "1", bk::parse_rfc3339("2025-09-01T00:00:00Z"), 1);
        r.state = bk::RunState::failed;
        r.exit_status = 3;
        r.metrics.clear();
        store.append(r);
    }
    ProcResult failed = run_cmd(kCli + " report --store failed-store --spec synthetic"
                                       " --metric elapsed_seconds --node-param nodes --out out3",
                                dir.path());
    CHECK(failed.exit_code == 1);
}

TEST_CASE("a mixed scenario exercises every run state through the CLI") {
    TempDir dir;
    bk::write_file(dir.sub("mixed.json"), R"({"behaviors": [
        {"outcome": "run-normally", "exit_status": 0, "elapsed_override": 120.5},
        {"outcome": "run-normally", "exit_status": 4},
        {"outcome": "hang-forever"},
        {"outcome": "refuse-submission"}
    ]})");
    bk::write_file(dir.sub("four.bkspec"),
                   "benchmark \"four\"\nparam i = a, b, c, d\ncommand = \"ignored {i}\"\n"
                   "metric elapsed_seconds from elapsed\nestimate_seconds = 1\n"
                   "workdir_root = " + dir.sub("runs") + "\n");
    ProcResult r = run_cmd(kCli + " run four.bkspec --store store --executor simulated:" +
                               dir.sub("mixed.json"),
                           dir.path());
    CHECK(r.exit_code == 1);

    bk::store::Store store(dir.sub("store"));
    std::vector<bk::RunRecord> records = store.query_all();
    REQUIRE(records.size() == 4);
    std::map<std::string, bk::RunState> by_param;
    for (const auto& rec : records) by_param[rec.params.at("i")] = rec.state;
    CHECK(by_param.at("a") == bk::RunState::succeeded);
    CHECK(by_param.at("b") == bk::RunState::failed);
    CHECK(by_param.at("c") == bk::RunState::timeout);
    CHECK(by_param.at("d") == bk::RunState::submit_error);
    for (const auto& rec : records)
        if (rec.params.at("i") == "a") CHECK(rec.elapsed_seconds == 120.5);
}

TEST_CASE("the shipped demo inputs are valid") {
    const std::string demo = BK_DEMO_DIR;
    // spec expands to three configurations
    bk::specmatrix::BenchmarkSpec spec =
        bk::specmatrix::parse_spec(bk::read_file(demo + "/scale.bkspec"));
    CHECK(bk::specmatrix::expand(spec).size() == 3);
    // scenario parses with all four outcomes represented
    bk::orchestrator::ExecutorScenario scenario =
        bk::orchestrator::load_scenario(demo + "/scenario-mixed.json");
    CHECK(scenario.behaviors.size() == 4);
    // telemetry reproduces the idle-tail pattern
    bk::analysis::JobTelemetry telemetry =
        bk::analysis::parse_telemetry(bk::read_file(demo + "/telemetry-idle.json"));
    bk::analysis::Finding idle = bk::analysis::detect_idle_tail(telemetry);
    CHECK(idle.kind == bk::analysis::FindingKind::idle_tail);
    CHECK(idle.evidence.at("t_star_seconds").get<double>() == 4500.0);
    CHECK(bk::analysis::detect_initial_memory(telemetry).kind ==
          bk::analysis::FindingKind::high_initial_memory);
    // the marginal input drives the workload into the iteration limit
    TempDir scratch;
    ProcResult marginal = run_cmd(
        kWorkload + " --input " + demo + "/marginal.json --max-iter 50", scratch.path());
    CHECK(marginal.exit_code == 4);
}

TEST_CASE("detect flags the synthetic step and stays quiet on flat history") {
    TempDir dir;
    build_step_store(dir.sub("step-store"), true);
    build_step_store(dir.sub("flat-store"), false);

    std::string detect = kCli + " detect --spec synthetic --metric elapsed_seconds";
    ProcResult stepped = run_cmd(detect + " --store step-store --event 2025-09-08T00:00:00Z",
                                 dir.path());
    CHECK(stepped.exit_code == 1);
    {
        nlohmann::json line = nlohmann::json::parse(stepped.out);
        CHECK(line.at("kind") == "regression");
        double severity = line.at("severity").get<double>();
        CHECK(severity >= 1.08);
        CHECK(severity <= 1.12);
        CHECK(line.at("configuration").at("nodes") == "4");
    }

    ProcResult flat = run_cmd(detect + " --store flat-store --event 2025-09-08T00:00:00Z",
                              dir.path());
    CHECK(flat.exit_code == 0);
    CHECK(nlohmann::json::parse(flat.out).at("kind") == "none");

    ProcResult automatic = run_cmd(detect + " --store step-store --auto", dir.path());
    CHECK(automatic.exit_code == 1);
    {
        nlohmann::json line = nlohmann::json::parse(automatic.out);
        CHECK(line.at("kind") == "regression");
        CHECK(line.at("evidence").at("split").at("change_point_index") == 5);
    }

    // insufficient samples on one side name the configuration, exit 2
    ProcResult late_event = run_cmd(detect + " --store step-store --event 2025-09-14T00:00:00Z",
                                    dir.path());
    CHECK(late_event.exit_code == 2);
    CHECK(late_event.err.find("nodes") != std::string::npos);

    // an empty store cannot be analyzed
    ProcResult empty = run_cmd(detect + " --store no-store --auto", dir.path());
    CHECK(empty.exit_code == 2);

    // malformed event timestamps are usage errors
    ProcResult bad_time = run_cmd(detect + " --store step-store --event last-tuesday",
                                  dir.path());
    CHECK(bad_time.exit_code == 2);
}
