#include "ddpc/naming.hpp"

#include "ddpc/error.hpp"

#include <cctype>
#include <charconv>

namespace ddpc {

namespace {

std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

}  // namespace

std::optional<std::string> CallSpec::get(const std::string& key) const
{
    auto it = args.find(key);
    if (it == args.end()) {
        return std::nullopt;
    }
    return it->second;
}

long CallSpec::get_int(const std::string& key, long fallback) const
{
    auto v = get(key);
    if (!v) {
        return fallback;
    }
    long out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
        throw ConfigError("argument '" + key + "' of '" + name + "' is not an integer: " + *v);
    }
    return out;
}

double CallSpec::get_double(const std::string& key, double fallback) const
{
    auto v = get(key);
    if (!v) {
        return fallback;
    }
    try {
        std::size_t used = 0;
        double out = std::stod(*v, &used);
        if (used != v->size()) {
            throw ConfigError("");
        }
        return out;
    } catch (const std::exception&) {
        throw ConfigError("argument '" + key + "' of '" + name + "' is not a number: " + *v);
    }
}

std::string CallSpec::str() const
{
    if (args.empty()) {
        return name;
    }
    std::string out = name + "(";
    bool first = true;
    for (const auto& [k, v] : args) {
        if (!first) {
            out += ",";
        }
        first = false;
        out += k + "=" + v;
    }
    return out + ")";
}

CallSpec parse_call(std::string_view text)
{
    CallSpec spec;
    const std::string s = trim(text);
    const auto open = s.find('(');
    if (open == std::string::npos) {
        spec.name = s;
    } else {
        if (s.back() != ')') {
            throw ConfigError("missing ')' in '" + s + "'");
        }
        spec.name = trim(std::string_view(s).substr(0, open));
        std::string_view body = std::string_view(s).substr(open + 1, s.size() - open - 2);
        while (!trim(body).empty()) {
            const auto comma = body.find(',');
            std::string_view item = body.substr(0, comma);
            const auto eq = item.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("expected key=value in '" + s + "'");
            }
            std::string key = trim(item.substr(0, eq));
            std::string value = trim(item.substr(eq + 1));
            if (key.empty() || value.empty()) {
                throw ConfigError("empty key or value in '" + s + "'");
            }
            if (!spec.args.emplace(key, value).second) {
                throw ConfigError("duplicate argument '" + key + "' in '" + s + "'");
            }
            if (comma == std::string_view::npos) {
                break;
            }
            body = body.substr(comma + 1);
        }
    }
    if (spec.name.empty()) {
        throw ConfigError("empty name in '" + s + "'");
    }
    for (char c : spec.name) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
            throw ConfigError("invalid character in name '" + spec.name + "'");
        }
    }
    return spec;
}

}  // namespace ddpc
