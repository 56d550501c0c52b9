#pragma once

#include "ddpc_cli/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ddpc::cli {

inline constexpr int kSchemaVersion = 1;

/// Frozen results.csv header; the last three columns hold wall-clock seconds.
const std::vector<std::string>& results_columns();
inline constexpr std::size_t kTimingColumns = 3;

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
nlohmann::ordered_json summary_json(const SuiteConfig& config, const std::vector<ResultRow>& rows);
/// Columns step, reference, output, input, solve_time; multi-channel signals get _1, _2, ... suffixes.
void write_plotdata_csv(std::ostream& out, const ClosedLoopResult& run);
/// Filename-safe stem for a (scenario, controller) pair.
std::string plotdata_stem(const std::string& scenario, const std::string& controller);

/// Writes every enabled artifact under `dir`, creating it as needed.
void write_outputs(const std::filesystem::path& dir, const SuiteConfig& config, const std::vector<ResultRow>& rows);

}  // namespace ddpc::cli
