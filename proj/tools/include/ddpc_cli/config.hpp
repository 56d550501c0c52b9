#pragma once

#include "ddpc/harness.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ddpc::cli {

struct EmitFlags {
    bool csv = true;
    bool json = true;
    bool plotdata = true;
};

struct ScenarioEntry {
    SuiteScenario suite;
    std::optional<std::uint64_t> seed;  // falls back to the suite seed
};

struct SuiteConfig {
    std::filesystem::path output = "results";
    EmitFlags emit;
    std::uint64_t seed = 1;
    std::vector<ScenarioEntry> scenarios;

    /// Scenarios with every seed filled in.
    std::vector<SuiteScenario> resolved() const;
    /// Copy in which every scenario carries an explicit seed.
    SuiteConfig pinned() const;
};

/// Throws ConfigError with `file:line: field: message` diagnostics.
SuiteConfig parse_config(const std::filesystem::path& path);
SuiteConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

nlohmann::ordered_json to_json(const SuiteConfig& config);
/// Deterministic YAML rendering; parsing it gives back an equal config.
std::string canonical_yaml(const SuiteConfig& config);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace ddpc::cli
