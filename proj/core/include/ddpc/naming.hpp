#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace ddpc {

/// A name with optional keyword arguments, e.g. `random_lti(seed=1,n=3)`.
struct CallSpec {
    std::string name;
    std::map<std::string, std::string> args;

    std::optional<std::string> get(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;

    /// Canonical text form; keys are emitted in sorted order.
    std::string str() const;
};

/// Parses `name` or `name(k=v,...)`. Throws ConfigError on malformed input.
CallSpec parse_call(std::string_view text);

}  // namespace ddpc
