#include "ddpc_cli/config.hpp"

#include "ddpc/error.hpp"
#include "ddpc/naming.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace ddpc::cli {

namespace {

using Json = nlohmann::ordered_json;

class Reader {
public:
    explicit Reader(std::string origin) : origin_(std::move(origin)) {}

    [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& what) const
    {
        std::string msg = origin_;
        if (at.IsDefined() && at.Mark().line >= 0) {
            msg += ":" + std::to_string(at.Mark().line + 1);
        }
        throw ConfigError(msg + ": " + field + ": " + what);
    }

    void expect_map(const YAML::Node& node, const std::string& field) const
    {
        if (!node.IsMap()) {
            fail(node, field, "expected a mapping");
        }
    }

    void check_keys(const YAML::Node& node, const std::string& field, std::initializer_list<const char*> allowed) const
    {
        expect_map(node, field);
        for (auto it = node.begin(); it != node.end(); ++it) {
            const std::string key = it->first.Scalar();
            const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
            if (!known) {
                fail(it->first, join(field, key), "unknown key");
            }
        }
    }

    template <class T>
    T scalar(const YAML::Node& node, const std::string& field, const char* type) const
    {
        if (!node.IsScalar()) {
            fail(node, field, std::string("expected ") + type);
        }
        try {
            return node.as<T>();
        } catch (const YAML::Exception&) {
            fail(node, field, std::string("expected ") + type + ", got '" + node.Scalar() + "'");
        }
    }

    double real(const YAML::Node& node, const std::string& field) const
    {
        const double v = scalar<double>(node, field, "a number");
        if (std::isnan(v)) {
            fail(node, field, "must not be NaN");
        }
        return v;
    }

    double nonnegative(const YAML::Node& node, const std::string& field) const
    {
        const double v = real(node, field);
        if (v < 0.0) {
            fail(node, field, "must be nonnegative");
        }
        return v;
    }

    Index integer(const YAML::Node& node, const std::string& field, long long min) const
    {
        const long long v = scalar<long long>(node, field, "an integer");
        if (v < min) {
            fail(node, field, "must be at least " + std::to_string(min));
        }
        return static_cast<Index>(v);
    }

    std::uint64_t seed(const YAML::Node& node, const std::string& field) const
    {
        if (node.IsScalar() && !node.Scalar().empty() && node.Scalar()[0] == '-') {
            fail(node, field, "must be nonnegative");
        }
        return scalar<std::uint64_t>(node, field, "a nonnegative integer");
    }

    std::string text(const YAML::Node& node, const std::string& field) const
    {
        return scalar<std::string>(node, field, "a string");
    }

    static std::string join(const std::string& field, const std::string& key)
    {
        return field.empty() ? key : field + "." + key;
    }

private:
    std::string origin_;
};

ReferenceSpec::Kind reference_kind(const Reader& rd, const YAML::Node& node, const std::string& field)
{
    const std::string s = rd.text(node, field);
    if (s == "constant") {
        return ReferenceSpec::Kind::constant;
    }
    if (s == "sinusoid") {
        return ReferenceSpec::Kind::sinusoid;
    }
    if (s == "piecewise") {
        return ReferenceSpec::Kind::piecewise;
    }
    rd.fail(node, field, "unknown reference kind '" + s + "' (constant, sinusoid, piecewise)");
}

void read_reference(const Reader& rd, const YAML::Node& node, const std::string& field, ReferenceSpec& ref)
{
    rd.check_keys(node, field, {"kind", "value", "amplitude", "period", "pieces"});
    if (node["kind"]) {
        ref.kind = reference_kind(rd, node["kind"], field + ".kind");
    }
    if (node["value"]) {
        ref.value = rd.real(node["value"], field + ".value");
    }
    if (node["amplitude"]) {
        ref.amplitude = rd.real(node["amplitude"], field + ".amplitude");
    }
    if (node["period"]) {
        ref.period = rd.real(node["period"], field + ".period");
        if (ref.period <= 0.0) {
            rd.fail(node["period"], field + ".period", "must be positive");
        }
    }
    if (const YAML::Node pieces = node["pieces"]) {
        if (!pieces.IsSequence()) {
            rd.fail(pieces, field + ".pieces", "expected a list");
        }
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            const std::string f = field + ".pieces[" + std::to_string(i) + "]";
            rd.check_keys(pieces[i], f, {"start", "value"});
            ReferenceSpec::Piece piece;
            if (pieces[i]["start"]) {
                piece.start = rd.integer(pieces[i]["start"], f + ".start", 0);
            }
            if (!pieces[i]["value"]) {
                rd.fail(pieces[i], f, "missing 'value'");
            }
            piece.value = rd.real(pieces[i]["value"], f + ".value");
            if (!ref.pieces.empty() && piece.start <= ref.pieces.back().start) {
                rd.fail(pieces[i], f + ".start", "pieces must be sorted by strictly increasing start");
            }
            ref.pieces.push_back(piece);
        }
    }
    if (ref.kind == ReferenceSpec::Kind::piecewise && ref.pieces.empty()) {
        rd.fail(node, field + ".pieces", "a piecewise reference needs at least one piece");
    }
}

void read_deepc(const Reader& rd, const YAML::Node& node, const std::string& field, DeepcSettings& d)
{
    rd.check_keys(node, field, {"lambda_g", "lambda_u", "lambda_y", "past", "input_slack"});
    if (node["lambda_g"]) {
        d.lambda_g = rd.nonnegative(node["lambda_g"], field + ".lambda_g");
    }
    if (node["lambda_u"]) {
        d.lambda_u = rd.nonnegative(node["lambda_u"], field + ".lambda_u");
    }
    if (node["lambda_y"]) {
        d.lambda_y = rd.nonnegative(node["lambda_y"], field + ".lambda_y");
    }
    if (const YAML::Node past = node["past"]) {
        const std::string s = rd.text(past, field + ".past");
        if (s == "soft") {
            d.past = PastMode::soft;
        } else if (s == "hard") {
            d.past = PastMode::hard;
        } else {
            rd.fail(past, field + ".past", "expected 'soft' or 'hard', got '" + s + "'");
        }
    }
    if (node["input_slack"]) {
        d.input_slack = rd.scalar<bool>(node["input_slack"], field + ".input_slack", "a boolean");
    }
}

void read_constraints(const Reader& rd, const YAML::Node& node, const std::string& field, Scenario& s)
{
    rd.check_keys(node, field, {"u_min", "u_max", "y_min", "y_max"});
    const auto bound = [&](const char* key, double& target) {
        if (node[key]) {
            target = rd.real(node[key], field + "." + key);
        }
    };
    bound("u_min", s.u_min);
    bound("u_max", s.u_max);
    bound("y_min", s.y_min);
    bound("y_max", s.y_max);
    if (s.u_min > s.u_max) {
        rd.fail(node, field, "u_min exceeds u_max");
    }
    if (s.y_min > s.y_max) {
        rd.fail(node, field, "y_min exceeds y_max");
    }
}

void read_data(const Reader& rd, const YAML::Node& node, const std::string& field, DataSpec& d)
{
    rd.check_keys(node, field, {"length", "episodes", "excitation", "amplitude", "initial_state_std"});
    if (node["length"]) {
        d.length = rd.integer(node["length"], field + ".length", 0);
    }
    if (node["episodes"]) {
        d.episodes = rd.integer(node["episodes"], field + ".episodes", 1);
    }
    if (const YAML::Node ex = node["excitation"]) {
        const std::string s = rd.text(ex, field + ".excitation");
        if (s == "gaussian") {
            d.excitation = Excitation::gaussian;
        } else if (s == "prbs") {
            d.excitation = Excitation::prbs;
        } else {
            rd.fail(ex, field + ".excitation", "expected 'gaussian' or 'prbs', got '" + s + "'");
        }
    }
    if (node["amplitude"]) {
        d.amplitude = rd.nonnegative(node["amplitude"], field + ".amplitude");
    }
    if (node["initial_state_std"]) {
        d.initial_state_std = rd.nonnegative(node["initial_state_std"], field + ".initial_state_std");
    }
}

bool known_controller(const std::string& name)
{
    const auto names = controller_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

ScenarioEntry read_scenario(const Reader& rd, const YAML::Node& node, const std::string& field)
{
    rd.check_keys(node, field,
                  {"name", "plant", "controllers", "horizon", "t_ini", "steps", "seed", "q", "r", "reference", "deepc",
                   "constraints", "noise", "data", "x0"});
    ScenarioEntry entry;
    Scenario& s = entry.suite.scenario;

    for (const char* key : {"name", "plant", "controllers"}) {
        if (!node[key]) {
            rd.fail(node, field + "." + key, "required key is missing");
        }
    }
    s.name = rd.text(node["name"], field + ".name");
    if (s.name.empty()) {
        rd.fail(node["name"], field + ".name", "must not be empty");
    }
    s.plant = rd.text(node["plant"], field + ".plant");
    try {
        make_plant(s.plant);
    } catch (const ConfigError& e) {
        rd.fail(node["plant"], field + ".plant", e.what());
    }

    const YAML::Node ctrls = node["controllers"];
    if (!ctrls.IsSequence() || ctrls.size() == 0) {
        rd.fail(ctrls, field + ".controllers", "expected a non-empty list");
    }
    for (std::size_t i = 0; i < ctrls.size(); ++i) {
        const std::string f = field + ".controllers[" + std::to_string(i) + "]";
        const std::string spec = rd.text(ctrls[i], f);
        std::string name;
        try {
            name = parse_call(spec).name;
        } catch (const ConfigError& e) {
            rd.fail(ctrls[i], f, e.what());
        }
        if (!known_controller(name)) {
            rd.fail(ctrls[i], f, "unknown controller '" + name + "'");
        }
        entry.suite.controllers.push_back(spec);
    }

    if (node["horizon"]) {
        s.horizon = rd.integer(node["horizon"], field + ".horizon", 1);
    }
    if (node["t_ini"]) {
        s.t_ini = rd.integer(node["t_ini"], field + ".t_ini", 1);
    }
    if (node["steps"]) {
        s.steps = rd.integer(node["steps"], field + ".steps", 1);
    }
    if (node["seed"]) {
        entry.seed = rd.seed(node["seed"], field + ".seed");
    }
    if (node["q"]) {
        s.q = rd.nonnegative(node["q"], field + ".q");
    }
    if (node["r"]) {
        s.r = rd.nonnegative(node["r"], field + ".r");
    }
    if (node["reference"]) {
        read_reference(rd, node["reference"], field + ".reference", s.reference);
    }
    if (node["deepc"]) {
        read_deepc(rd, node["deepc"], field + ".deepc", s.deepc);
    }
    if (node["constraints"]) {
        read_constraints(rd, node["constraints"], field + ".constraints", s);
    }
    if (const YAML::Node noise = node["noise"]) {
        const std::string f = field + ".noise";
        rd.check_keys(noise, f, {"measurement_std", "process_std"});
        if (noise["measurement_std"]) {
            s.noise.measurement_std = rd.nonnegative(noise["measurement_std"], f + ".measurement_std");
        }
        if (noise["process_std"]) {
            s.noise.process_std = rd.nonnegative(noise["process_std"], f + ".process_std");
        }
    }
    if (node["data"]) {
        read_data(rd, node["data"], field + ".data", s.data);
    }
    if (const YAML::Node x0 = node["x0"]) {
        if (!x0.IsSequence()) {
            rd.fail(x0, field + ".x0", "expected a list of numbers");
        }
        Vector v(static_cast<Index>(x0.size()));
        for (std::size_t i = 0; i < x0.size(); ++i) {
            v(static_cast<Index>(i)) = rd.real(x0[i], field + ".x0[" + std::to_string(i) + "]");
        }
        if (v.size() != make_plant(s.plant).n()) {
            rd.fail(x0, field + ".x0", "length " + std::to_string(v.size()) + " does not match the plant state");
        }
        s.x0 = v;
    }
    return entry;
}

// Shortest text that parses back to the same double.
std::string number(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void emit(YAML::Emitter& out, const Json& j)
{
    switch (j.type()) {
    case Json::value_t::object:
        out << YAML::BeginMap;
        for (const auto& [key, value] : j.items()) {
            out << YAML::Key << key << YAML::Value;
            emit(out, value);
        }
        out << YAML::EndMap;
        break;
    case Json::value_t::array: {
        const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_primitive(); });
        out << (flat ? YAML::Flow : YAML::Block) << YAML::BeginSeq;
        for (const Json& e : j) {
            emit(out, e);
        }
        out << YAML::EndSeq;
        break;
    }
    case Json::value_t::string:
        out << YAML::DoubleQuoted << j.get<std::string>();
        break;
    case Json::value_t::boolean:
        out << (j.get<bool>() ? "true" : "false");
        break;
    case Json::value_t::number_float:
        out << number(j.get<double>());
        break;
    case Json::value_t::number_unsigned:
        out << std::to_string(j.get<std::uint64_t>());
        break;
    case Json::value_t::number_integer:
        out << std::to_string(j.get<std::int64_t>());
        break;
    default:
        out << YAML::Null;
    }
}

const char* past_name(PastMode m) { return m == PastMode::soft ? "soft" : "hard"; }
const char* excitation_name(Excitation e) { return e == Excitation::gaussian ? "gaussian" : "prbs"; }

Json scenario_json(const ScenarioEntry& entry)
{
    const Scenario& s = entry.suite.scenario;
    Json j;
    j["name"] = s.name;
    j["plant"] = s.plant;
    j["controllers"] = entry.suite.controllers;
    j["horizon"] = s.horizon;
    j["t_ini"] = s.t_ini;
    j["steps"] = s.steps;
    if (entry.seed) {
        j["seed"] = *entry.seed;
    }
    j["q"] = s.q;
    j["r"] = s.r;

    Json ref;
    ref["kind"] = to_string(s.reference.kind);
    ref["value"] = s.reference.value;
    ref["amplitude"] = s.reference.amplitude;
    ref["period"] = s.reference.period;
    if (!s.reference.pieces.empty()) {
        Json pieces = Json::array();
        for (const auto& p : s.reference.pieces) {
            pieces.push_back(Json{{"start", p.start}, {"value", p.value}});
        }
        ref["pieces"] = pieces;
    }
    j["reference"] = ref;

    j["deepc"] = Json{{"lambda_g", s.deepc.lambda_g},
                      {"lambda_u", s.deepc.lambda_u},
                      {"lambda_y", s.deepc.lambda_y},
                      {"past", past_name(s.deepc.past)},
                      {"input_slack", s.deepc.input_slack}};

    // unbounded sides are left out; JSON has no infinity
    Json box = Json::object();
    const auto bound = [&](const char* key, double v) {
        if (std::isfinite(v)) {
            box[key] = v;
        }
    };
    bound("u_min", s.u_min);
    bound("u_max", s.u_max);
    bound("y_min", s.y_min);
    bound("y_max", s.y_max);
    j["constraints"] = box;

    j["noise"] = Json{{"measurement_std", s.noise.measurement_std}, {"process_std", s.noise.process_std}};
    j["data"] = Json{{"length", s.data.length},
                     {"episodes", s.data.episodes},
                     {"excitation", excitation_name(s.data.excitation)},
                     {"amplitude", s.data.amplitude},
                     {"initial_state_std", s.data.initial_state_std}};
    if (s.x0) {
        j["x0"] = std::vector<double>(s.x0->data(), s.x0->data() + s.x0->size());
    }
    return j;
}

}  // namespace

std::vector<SuiteScenario> SuiteConfig::resolved() const
{
    std::vector<SuiteScenario> out;
    out.reserve(scenarios.size());
    for (const ScenarioEntry& e : scenarios) {
        SuiteScenario s = e.suite;
        s.scenario.seed = e.seed.value_or(seed);
        out.push_back(std::move(s));
    }
    return out;
}

SuiteConfig SuiteConfig::pinned() const
{
    SuiteConfig c = *this;
    for (ScenarioEntry& e : c.scenarios) {
        e.seed = e.seed.value_or(seed);
    }
    return c;
}

SuiteConfig parse_config_text(const std::string& text, const std::string& origin)
{
    const Reader rd(origin);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ": syntax error: " + e.msg);
    }
    if (!root.IsMap()) {
        throw ConfigError(origin + ": expected a mapping at the top level");
    }
    rd.check_keys(root, "", {"output", "seed", "emit", "scenarios"});

    SuiteConfig cfg;
    if (root["output"]) {
        cfg.output = rd.text(root["output"], "output");
    }
    if (root["seed"]) {
        cfg.seed = rd.seed(root["seed"], "seed");
    }
    if (const YAML::Node e = root["emit"]) {
        rd.check_keys(e, "emit", {"csv", "json", "plotdata"});
        if (e["csv"]) {
            cfg.emit.csv = rd.scalar<bool>(e["csv"], "emit.csv", "a boolean");
        }
        if (e["json"]) {
            cfg.emit.json = rd.scalar<bool>(e["json"], "emit.json", "a boolean");
        }
        if (e["plotdata"]) {
            cfg.emit.plotdata = rd.scalar<bool>(e["plotdata"], "emit.plotdata", "a boolean");
        }
    }

    const YAML::Node list = root["scenarios"];
    if (!list) {
        rd.fail(root, "scenarios", "required key is missing");
    }
    if (!list.IsSequence() || list.size() == 0) {
        rd.fail(list, "scenarios", "expected a non-empty list");
    }
    std::set<std::string> names;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string field = "scenarios[" + std::to_string(i) + "]";
        ScenarioEntry entry = read_scenario(rd, list[i], field);
        if (!names.insert(entry.suite.scenario.name).second) {
            rd.fail(list[i]["name"], field + ".name", "duplicate scenario name '" + entry.suite.scenario.name + "'");
        }
        cfg.scenarios.push_back(std::move(entry));
    }
    return cfg;
}

SuiteConfig parse_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string() + ": cannot open config file");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

nlohmann::ordered_json to_json(const SuiteConfig& config)
{
    Json j;
    j["output"] = config.output.string();
    j["seed"] = config.seed;
    j["emit"] = Json{{"csv", config.emit.csv}, {"json", config.emit.json}, {"plotdata", config.emit.plotdata}};
    Json list = Json::array();
    for (const ScenarioEntry& e : config.scenarios) {
        list.push_back(scenario_json(e));
    }
    j["scenarios"] = list;
    return j;
}

std::string canonical_yaml(const SuiteConfig& config)
{
    YAML::Emitter out;
    emit(out, to_json(config));
    return std::string(out.c_str()) + "\n";
}

std::uint64_t fnv1a64(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace ddpc::cli
