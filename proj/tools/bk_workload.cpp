// bk-workload: the self-contained numerical benchmark. Builds A_i =
// alpha_i S_i + H_i, verifies the unit-circle convergence precondition on
// (S1, S2), runs the fixed-point iteration, and reports through its exit
// status: 0 success (metrics.json written), 2 usage or input error,
// 3 precondition violated, 4 solve failure (max iterations or singular
// system). Every failure prints one diagnostic line on stderr.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bk/common.hpp"
#include "bk/workload.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"self-contained fixed-point benchmark workload"};
    app.get_formatter()->column_width(34);

    std::vector<std::string> generate;
    app.add_option("--generate", generate,
                   "generate inputs: <seed> <n> <random|guaranteed-convergent>")
        ->expected(3);
    std::string input_path;
    app.add_option("--input", input_path, "read a workload input JSON document");
    std::optional<double> tol;
    app.add_option("--tol", tol, "relative convergence tolerance (default 1e-10)");
    std::optional<int64_t> max_iter;
    app.add_option("--max-iter", max_iter, "iteration limit (default 1000)");
    std::optional<int64_t> hpd_samples;
    app.add_option("--hpd-samples", hpd_samples, "theta samples for the precondition (default 64)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (generate.empty() == input_path.empty()) {
        std::cerr << "error: exactly one of --generate and --input is required\n";
        return 2;
    }

    bk::workload::WorkloadInput input;
    try {
        if (!generate.empty()) {
            uint64_t seed = std::stoull(generate[0]);
            unsigned long n = std::stoul(generate[1]);
            bk::workload::GenMode mode = bk::workload::gen_mode_from_string(generate[2]);
            input = bk::workload::generate_inputs(seed, n, mode);
        } else {
            std::string text;
            try {
                text = bk::read_file(input_path);
            } catch (const bk::Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
            input = bk::workload::workload_input_from_json(nlohmann::json::parse(text));
        }
        if (tol) input.tol = *tol;
        if (max_iter) input.max_iter = *max_iter;
        if (hpd_samples) input.hpd_samples = *hpd_samples;
        input.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: invalid input: " << e.what() << "\n";
        return 2;
    }

    bk::workload::WorkloadRunOutcome outcome = bk::workload::run_workload(input);
    if (outcome.exit_code != 0) {
        std::cerr << "error: " << outcome.diagnostic << "\n";
        return outcome.exit_code;
    }

    const bk::workload::WorkloadResult& result = *outcome.result;
    bk::write_file("metrics.json",
                   bk::workload::metrics_json(result, input.s1.n).dump() + "\n");
    std::cout << "converged in " << result.iterations << " iterations (residual "
              << bk::format_general(result.residual) << ", n=" << input.s1.n << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
