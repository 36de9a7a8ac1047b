#include "gsvie/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace gsvie {

namespace {

std::string type_of(const Json& j) {
    if (j.is_object()) return "object";
    if (j.is_array()) return "array";
    if (j.is_string()) return "string";
    if (j.is_boolean()) return "boolean";
    if (j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    return "null";
}

bool has_type(const Json& j, const std::string& t) {
    if (t == "number") return j.is_number();
    if (t == "integer") return j.is_number_integer();
    return type_of(j) == t;
}

std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }

void validate_node(const Json& doc, const Json& schema, const std::string& path, std::vector<SchemaError>& out) {
    if (auto it = schema.find("type"); it != schema.end()) {
        if (!has_type(doc, it->get<std::string>())) {
            out.push_back({path.empty() ? "/" : path, "expected " + it->get<std::string>() + ", got " + type_of(doc)});
            return;
        }
    }
    if (auto it = schema.find("enum"); it != schema.end()) {
        if (std::find(it->begin(), it->end(), doc) == it->end())
            out.push_back({path, "value " + doc.dump() + " not one of " + it->dump()});
    }
    if (doc.is_number()) {
        const double v = doc.get<double>();
        if (auto it = schema.find("minimum"); it != schema.end() && v < it->get<double>())
            out.push_back({path, "must be >= " + it->dump()});
        if (auto it = schema.find("exclusiveMinimum"); it != schema.end() && !(v > it->get<double>()))
            out.push_back({path, "must be > " + it->dump()});
        if (auto it = schema.find("maximum"); it != schema.end() && v > it->get<double>())
            out.push_back({path, "must be <= " + it->dump()});
    }
    if (doc.is_object()) {
        const Json props = schema.value("properties", Json::object());
        if (auto it = schema.find("required"); it != schema.end())
            for (const auto& k : *it)
                if (!doc.contains(k.get<std::string>()))
                    out.push_back({child(path, k.get<std::string>()), "required field missing"});
        const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
        for (const auto& [k, v] : doc.items()) {
            if (auto p = props.find(k); p != props.end()) validate_node(v, *p, child(path, k), out);
            else if (closed) out.push_back({child(path, k), "unknown key"});
            else if (auto ap = schema.find("additionalProperties"); ap != schema.end() && ap->is_object())
                validate_node(v, *ap, child(path, k), out);
        }
    }
    if (doc.is_array()) {
        if (auto it = schema.find("minItems"); it != schema.end() && doc.size() < it->get<std::size_t>())
            out.push_back({path, "needs at least " + it->dump() + " items"});
        if (auto it = schema.find("items"); it != schema.end())
            for (std::size_t i = 0; i < doc.size(); ++i) validate_node(doc[i], *it, child(path, std::to_string(i)), out);
    }
}

const char* kSchemaText = R"({
  "type": "object",
  "additionalProperties": false,
  "required": ["schema_version", "system"],
  "properties": {
    "schema_version": {"type": "integer", "enum": [1]},
    "command": {"type": "string", "enum": ["simulate", "expectation", "compare", "convergence", "check-assumptions"]},
    "grid": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "T": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 1}
      }
    },
    "band": {
      "type": "object", "additionalProperties": false, "required": ["sigma_lo", "sigma_hi"],
      "properties": {
        "sigma_lo": {"type": "number", "exclusiveMinimum": 0},
        "sigma_hi": {"type": "number", "exclusiveMinimum": 0}
      }
    },
    "controls": {
      "type": "array", "minItems": 1,
      "items": {
        "type": "object", "additionalProperties": false, "required": ["strategy"],
        "properties": {
          "strategy": {"type": "string", "enum": ["lo", "hi", "random", "bang_bang"]},
          "switch_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
          "start_high": {"type": "boolean"}
        }
      }
    },
    "system": {
      "type": "object", "additionalProperties": false, "required": ["name"],
      "properties": {
        "name": {"type": "string"},
        "parameters": {"type": "object", "additionalProperties": {"type": "number"}}
      }
    },
    "run": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "scenarios": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "noise": {"type": "string", "enum": ["gaussian", "rademacher"]},
        "method": {"type": "string", "enum": ["direct", "picard", "separable", "monte_carlo", "lattice", "both"]},
        "equation": {"type": "integer", "enum": [1, 2]},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "beta": {"type": "number", "minimum": 0},
        "stopping": {"type": "string", "enum": ["node_sup", "weighted"]},
        "initial_guess": {"type": "string", "enum": ["phi", "zero"]},
        "ns": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "deltas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "stopping_mode": {"type": "string", "enum": ["with_phi", "H_only"]},
        "tol_factor": {"type": "number", "minimum": 0},
        "samples": {"type": "integer", "minimum": 1},
        "assumption_scenarios": {"type": "integer", "minimum": 1},
        "x_range": {"type": "number", "exclusiveMinimum": 0},
        "functional": {
          "type": "object", "additionalProperties": false, "required": ["kind"],
          "properties": {
            "kind": {"type": "string", "enum": ["power", "abs", "max", "qv"]},
            "power": {"type": "number"}
          }
        }
      }
    },
    "output": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "directory": {"type": "string"},
        "formats": {"type": "array", "items": {"type": "string", "enum": ["csv", "json"]}},
        "scenarios": {"type": "boolean"}
      }
    }
  }
})";

template <typename T>
bool parse_full(const std::string& s, T& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

Json scalar_to_json(const YAML::Node& node) {
    const std::string& s = node.Scalar();
    if (node.Tag() == "!") return s;  // quoted
    if (s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "false" || s == "False" || s == "FALSE") return false;
    if (s == "null" || s == "~" || s.empty()) return nullptr;
    std::int64_t i = 0;
    if (parse_full(s, i)) return i;
    std::uint64_t u = 0;
    if (parse_full(s, u)) return u;
    double d = 0.0;
    if (parse_full(s, d)) return d;
    return s;
}

Json yaml_to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Map: {
            Json j = Json::object();
            for (const auto& kv : node) j[kv.first.as<std::string>()] = yaml_to_json(kv.second);
            return j;
        }
        case YAML::NodeType::Sequence: {
            Json j = Json::array();
            for (const auto& v : node) j.push_back(yaml_to_json(v));
            return j;
        }
        case YAML::NodeType::Scalar: return scalar_to_json(node);
        default: return nullptr;
    }
}

}  // namespace

std::vector<SchemaError> validate_schema(const Json& doc, const Json& schema) {
    std::vector<SchemaError> out;
    validate_node(doc, schema, "", out);
    return out;
}

const Json& config_schema() {
    static const Json schema = Json::parse(kSchemaText);
    return schema;
}

Json parse_config_text(const std::string& text) {
    const auto first = std::find_if(text.begin(), text.end(), [](unsigned char c) { return !std::isspace(c); });
    if (first != text.end() && *first == '{') {
        try {
            return Json::parse(text);
        } catch (const Json::parse_error& e) {
            throw ConfigError("/", std::string("invalid JSON: ") + e.what());
        }
    }
    try {
        return yaml_to_json(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError("/", std::string("invalid YAML: ") + e.what());
    }
}

Json load_config_tree(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("/", "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

namespace {

ControlStrategy parse_control(const Json& j, const std::string& path) {
    const std::string s = j.at("strategy").get<std::string>();
    if (s != "bang_bang" && (j.contains("switch_times") || j.contains("start_high")))
        throw ConfigError(path, "switch_times/start_high only apply to bang_bang");
    if (s == "lo") return strategy::ConstantLo{};
    if (s == "hi") return strategy::ConstantHi{};
    if (s == "random") return strategy::UniformRandom{};
    strategy::BangBang bb;
    bb.switch_times = j.value("switch_times", std::vector<double>{});
    bb.start_high = j.value("start_high", false);
    if (!std::is_sorted(bb.switch_times.begin(), bb.switch_times.end()))
        throw ConfigError(path + "/switch_times", "must be sorted");
    return bb;
}

Json control_to_json(const ControlStrategy& c) {
    Json j{{"strategy", strategy_name(c)}};
    if (const auto* bb = std::get_if<strategy::BangBang>(&c)) {
        j["switch_times"] = bb->switch_times;
        j["start_high"] = bb->start_high;
    }
    return j;
}

}  // namespace

ExperimentConfig parse_config(const Json& tree) {
    const auto errors = validate_schema(tree, config_schema());
    if (!errors.empty()) throw ConfigError(errors.front().path, errors.front().message);

    ExperimentConfig c;
    c.schema_version = tree.at("schema_version").get<int>();
    c.command = tree.value("command", std::string{});
    if (const auto it = tree.find("grid"); it != tree.end()) {
        c.T = it->value("T", c.T);
        c.N = it->value("N", c.N);
    }
    if (const auto it = tree.find("band"); it != tree.end()) {
        c.band = VolatilityBand{it->at("sigma_lo").get<double>(), it->at("sigma_hi").get<double>()};
        if (c.band.sigma_lo > c.band.sigma_hi) throw ConfigError("/band", "sigma_lo must not exceed sigma_hi");
    }
    if (const auto it = tree.find("controls"); it != tree.end()) {
        c.controls.clear();
        for (std::size_t i = 0; i < it->size(); ++i)
            c.controls.push_back(parse_control((*it)[i], "/controls/" + std::to_string(i)));
    }
    const Json& sys = tree.at("system");
    c.system = sys.at("name").get<std::string>();
    const auto& names = registry_names();
    if (std::find(names.begin(), names.end(), c.system) == names.end())
        throw ConfigError("/system/name", "unknown system '" + c.system + "'");
    const Parameters defaults = registry_defaults(c.system);
    if (const auto it = sys.find("parameters"); it != sys.end()) {
        for (const auto& [k, v] : it->items()) {
            if (!defaults.count(k)) throw ConfigError("/system/parameters/" + k, "unknown parameter for " + c.system);
            c.parameters[k] = v.get<double>();
        }
    }
    if (const auto it = tree.find("run"); it != tree.end()) {
        const Json& r = *it;
        auto& run = c.run;
        run.scenarios = r.value("scenarios", run.scenarios);
        run.seed = r.value("seed", run.seed);
        if (r.contains("noise")) run.noise = noise_from_string(r["noise"].get<std::string>());
        run.method = r.value("method", run.method);
        run.equation = r.value("equation", run.equation);
        run.tol = r.value("tol", run.tol);
        run.max_iter = r.value("max_iter", run.max_iter);
        if (r.contains("beta")) run.beta = r["beta"].get<double>();
        run.stopping = r.value("stopping", run.stopping);
        run.initial_guess = r.value("initial_guess", run.initial_guess);
        run.ns = r.value("ns", run.ns);
        run.deltas = r.value("deltas", run.deltas);
        run.stopping_mode = r.value("stopping_mode", run.stopping_mode);
        run.tol_factor = r.value("tol_factor", run.tol_factor);
        run.samples = r.value("samples", run.samples);
        run.assumption_scenarios = r.value("assumption_scenarios", run.assumption_scenarios);
        run.x_range = r.value("x_range", run.x_range);
        if (const auto f = r.find("functional"); f != r.end()) {
            run.functional.kind = f->at("kind").get<std::string>();
            run.functional.power = f->value("power", run.functional.power);
        }
    }
    if (const auto it = tree.find("output"); it != tree.end()) {
        c.output.directory = it->value("directory", c.output.directory);
        c.output.formats = it->value("formats", c.output.formats);
        c.output.scenarios = it->value("scenarios", c.output.scenarios);
    }
    return c;
}

Json to_json(const ExperimentConfig& c) {
    Json j;
    j["schema_version"] = c.schema_version;
    if (!c.command.empty()) j["command"] = c.command;
    j["grid"] = Json{{"T", c.T}, {"N", c.N}};
    j["band"] = Json{{"sigma_lo", c.band.sigma_lo}, {"sigma_hi", c.band.sigma_hi}};
    j["controls"] = Json::array();
    for (const auto& s : c.controls) j["controls"].push_back(control_to_json(s));
    Json params = Json::object();
    for (const auto& [k, v] : c.parameters) params[k] = v;
    j["system"] = Json{{"name", c.system}, {"parameters", params}};
    const auto& r = c.run;
    Json run{{"scenarios", r.scenarios},
             {"seed", r.seed},
             {"noise", to_string(r.noise)},
             {"equation", r.equation},
             {"tol", r.tol},
             {"max_iter", r.max_iter},
             {"stopping", r.stopping},
             {"initial_guess", r.initial_guess},
             {"ns", r.ns},
             {"deltas", r.deltas},
             {"stopping_mode", r.stopping_mode},
             {"tol_factor", r.tol_factor},
             {"samples", r.samples},
             {"assumption_scenarios", r.assumption_scenarios},
             {"x_range", r.x_range},
             {"functional", {{"kind", r.functional.kind}, {"power", r.functional.power}}}};
    if (!r.method.empty()) run["method"] = r.method;
    if (r.beta) run["beta"] = *r.beta;
    j["run"] = std::move(run);
    j["output"] = Json{{"directory", c.output.directory}, {"formats", c.output.formats}, {"scenarios", c.output.scenarios}};
    return j;
}

}  // namespace gsvie
