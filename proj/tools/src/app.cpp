#include "ddpc_cli/app.hpp"

#include "ddpc_cli/config.hpp"
#include "ddpc_cli/report.hpp"

#include "ddpc/error.hpp"
#include "ddpc/plant.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <optional>
#include <ostream>
#include <thread>

namespace ddpc::cli {

namespace {

struct RunArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int jobs = 0;
    int timing_reps = 1;
};

int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err)
{
    SuiteConfig cfg = parse_config(a.config);
    if (a.seed) {
        cfg.seed = *a.seed;
    }
    if (!a.out.empty()) {
        cfg.output = a.out;
    }

    SuiteOptions opts;
    opts.jobs = a.jobs > 0 ? a.jobs : static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
    opts.timing_reps = a.timing_reps;
    opts.keep_trajectories = cfg.emit.plotdata;

    const std::vector<ResultRow> rows = run_suite(cfg.resolved(), opts);
    write_outputs(cfg.output, cfg, rows);

    std::size_t failed = 0;
    for (const ResultRow& r : rows) {
        if (!r.ok()) {
            ++failed;
            err << "row " << r.scenario << " / " << r.controller << ": " << r.status << "\n";
        }
    }
    out << rows.size() - failed << " of " << rows.size() << " rows ok; results in " << cfg.output.string() << "\n";
    return failed ? 1 : 0;
}

int cmd_verify(std::uint64_t seed, std::ostream& out)
{
    bool all = true;
    for (const CheckResult& c : equivalence_suite(seed)) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name;
        if (!c.detail.empty()) {
            out << ": " << c.detail;
        }
        out << "\n";
        all = all && c.passed;
    }
    return all ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app("Data-driven predictive control benchmark suite", "ddpc");
    app.require_subcommand(1);

    RunArgs run;
    CLI::App* run_cmd = app.add_subcommand("run", "Run every scenario x controller of a suite config");
    run_cmd->add_option("--config", run.config, "Suite config (YAML)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--out", run.out, "Output directory, overrides the config");
    run_cmd->add_option("--seed", run.seed, "Suite seed, overrides the config");
    run_cmd->add_option("--jobs", run.jobs, "Parallel rows (default: available cores)")->check(CLI::NonNegativeNumber);
    run_cmd->add_option("--timing-reps", run.timing_reps, "Closed-loop repetitions for timing columns")
        ->check(CLI::PositiveNumber);

    std::uint64_t verify_seed = 7;
    CLI::App* verify_cmd = app.add_subcommand("verify", "Run the cross-variant equivalence checks");
    verify_cmd->add_option("--seed", verify_seed, "Seed of the check problems");

    CLI::App* plants_cmd = app.add_subcommand("list-plants", "List registered plants");
    CLI::App* ctrls_cmd = app.add_subcommand("list-controllers", "List registered controllers");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (*run_cmd) {
            return cmd_run(run, out, err);
        }
        if (*verify_cmd) {
            return cmd_verify(verify_seed, out);
        }
        if (*plants_cmd) {
            for (const std::string& n : plant_names()) {
                out << n << "\n";
            }
        }
        if (*ctrls_cmd) {
            for (const std::string& n : controller_names()) {
                out << n << "\n";
            }
        }
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ddpc::cli
