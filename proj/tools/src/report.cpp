#include "ddpc_cli/report.hpp"

#include "ddpc/error.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace ddpc::cli {

namespace {

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string q = "\"";
    for (char c : s) {
        q += c;
        if (c == '"') {
            q += '"';
        }
    }
    return q + "\"";
}

void header(std::ostream& out, const char* name, Index width, bool& first)
{
    for (Index i = 0; i < width; ++i) {
        out << (first ? "" : ",") << name;
        if (width > 1) {
            out << "_" << i + 1;
        }
        first = false;
    }
}

std::ofstream open(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    return out;
}

}  // namespace

const std::vector<std::string>& results_columns()
{
    static const std::vector<std::string> cols = {
        "scenario", "controller",     "plant",     "steps",          "rmse",          "tracking_cost", "violations",
        "max_violation", "stored_entries", "decision_dim", "status", "mean_solve_s", "median_solve_s", "max_solve_s"};
    return cols;
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    const auto& cols = results_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out << (i ? "," : "") << cols[i];
    }
    out << "\n";
    for (const ResultRow& r : rows) {
        const Metrics& m = r.metrics;
        out << csv_field(r.scenario) << ',' << csv_field(r.controller) << ',' << csv_field(r.plant) << ',' << r.steps
            << ',' << num(m.rmse) << ',' << num(m.tracking_cost) << ',' << m.violations << ',' << num(m.max_violation)
            << ',' << m.stored_entries << ',' << m.decision_dim << ',' << csv_field(r.status) << ','
            << num(m.mean_solve) << ',' << num(m.median_solve) << ',' << num(m.max_solve) << "\n";
    }
}

nlohmann::ordered_json summary_json(const SuiteConfig& config, const std::vector<ResultRow>& rows)
{
    const SuiteConfig pinned = config.pinned();
    // the output location does not change results, so it stays out of the hash
    SuiteConfig hashed = pinned;
    hashed.output.clear();
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016" PRIx64, fnv1a64(canonical_yaml(hashed)));

    nlohmann::ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["config_hash"] = std::string("fnv1a64:") + hash;
    j["seed"] = config.seed;
    j["config"] = to_json(pinned);
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const ResultRow& r : rows) {
        const Metrics& m = r.metrics;
        list.push_back({{"scenario", r.scenario},
                        {"controller", r.controller},
                        {"plant", r.plant},
                        {"steps", r.steps},
                        {"rmse", m.rmse},
                        {"tracking_cost", m.tracking_cost},
                        {"violations", m.violations},
                        {"max_violation", m.max_violation},
                        {"stored_entries", m.stored_entries},
                        {"decision_dim", m.decision_dim},
                        {"status", r.status},
                        {"mean_solve_s", m.mean_solve},
                        {"median_solve_s", m.median_solve},
                        {"max_solve_s", m.max_solve}});
    }
    j["rows"] = list;
    return j;
}

void write_plotdata_csv(std::ostream& out, const ClosedLoopResult& run)
{
    bool first = true;
    header(out, "step", 1, first);
    out << ",reference";
    header(out, "output", run.y.rows(), first);
    header(out, "input", run.u.rows(), first);
    out << ",solve_time\n";
    for (Index k = 0; k < run.y.cols(); ++k) {
        out << k << ',' << num(run.r.rows() ? run.r(0, k) : 0.0);
        for (Index i = 0; i < run.y.rows(); ++i) {
            out << ',' << num(run.y(i, k));
        }
        for (Index i = 0; i < run.u.rows(); ++i) {
            out << ',' << num(run.u(i, k));
        }
        const auto ks = static_cast<std::size_t>(k);
        out << ',' << num(ks < run.solve_seconds.size() ? run.solve_seconds[ks] : 0.0) << "\n";
    }
}

std::string plotdata_stem(const std::string& scenario, const std::string& controller)
{
    std::string stem = scenario + "__" + controller;
    for (char& c : stem) {
        const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                          c == '-' || c == '.';
        if (!keep) {
            c = '_';
        }
    }
    return stem;
}

void write_outputs(const std::filesystem::path& dir, const SuiteConfig& config, const std::vector<ResultRow>& rows)
{
    std::filesystem::create_directories(dir);
    if (config.emit.csv) {
        std::ofstream out = open(dir / "results.csv");
        write_results_csv(out, rows);
    }
    if (config.emit.json) {
        std::ofstream out = open(dir / "summary.json");
        out << summary_json(config, rows).dump(2) << "\n";
    }
    if (config.emit.plotdata) {
        const std::filesystem::path pd = dir / "plotdata";
        std::filesystem::create_directories(pd);
        for (const ResultRow& r : rows) {
            if (r.trajectory) {
                std::ofstream out = open(pd / (plotdata_stem(r.scenario, r.controller) + ".csv"));
                write_plotdata_csv(out, *r.trajectory);
            }
        }
    }
}

}  // namespace ddpc::cli
