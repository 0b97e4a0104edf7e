#include "raresim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "raresim/errors.hpp"

namespace raresim {

namespace {

struct Value {
    enum class Kind { number, string, boolean, number_array } kind = Kind::number;
    double num = 0.0;
    bool boolean = false;
    std::string str;
    std::vector<double> nums;
    int line = 0;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
    bool in_quote = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_quote = !in_quote;
        if (s[i] == '#' && !in_quote) return s.substr(0, i);
    }
    return s;
}

double parse_number(const std::string& token, const std::string& origin, int line) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(token, &pos);
    } catch (const std::exception&) {
        throw ConfigError(origin + ":" + std::to_string(line) + ": not a number: '" + token + "'");
    }
    if (pos != token.size()) {
        throw ConfigError(origin + ":" + std::to_string(line) + ": trailing junk after number: '" + token + "'");
    }
    return v;
}

Value parse_value(const std::string& raw, const std::string& origin, int line) {
    Value v;
    v.line = line;
    const std::string token = trim(raw);
    if (token.empty()) throw ConfigError(origin + ":" + std::to_string(line) + ": missing value");
    if (token.front() == '"') {
        if (token.size() < 2 || token.back() != '"') {
            throw ConfigError(origin + ":" + std::to_string(line) + ": unterminated string");
        }
        v.kind = Value::Kind::string;
        v.str = token.substr(1, token.size() - 2);
        return v;
    }
    if (token == "true" || token == "false") {
        v.kind = Value::Kind::boolean;
        v.boolean = token == "true";
        return v;
    }
    if (token.front() == '[') {
        if (token.back() != ']') {
            throw ConfigError(origin + ":" + std::to_string(line) + ": arrays must close on the same line");
        }
        v.kind = Value::Kind::number_array;
        std::string inner = token.substr(1, token.size() - 2);
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            v.nums.push_back(parse_number(item, origin, line));
        }
        return v;
    }
    v.kind = Value::Kind::number;
    v.num = parse_number(token, origin, line);
    return v;
}

class KeyMap {
public:
    KeyMap(std::map<std::string, Value> values, std::string origin)
        : values_(std::move(values)), origin_(std::move(origin)) {}

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    double number(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        if (it->second.kind != Value::Kind::number) fail(it->second.line, key, "a number");
        return it->second.num;
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const double v = number(key, static_cast<double>(fallback));
        if (std::floor(v) != v) {
            throw ConfigError(origin_ + ": field '" + key + "' must be an integer");
        }
        return static_cast<std::int64_t>(v);
    }
    bool boolean(const std::string& key, bool fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        if (it->second.kind != Value::Kind::boolean) fail(it->second.line, key, "true or false");
        return it->second.boolean;
    }
    std::string string(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        if (it->second.kind != Value::Kind::string) fail(it->second.line, key, "a quoted string");
        return it->second.str;
    }
    std::vector<double> numbers(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return {};
        consumed_.insert(it->first);
        if (it->second.kind != Value::Kind::number_array) fail(it->second.line, key, "an array of numbers");
        return it->second.nums;
    }

    // Remaining keys under `prefix.` are handed back as numeric overrides.
    std::map<std::string, double> numeric_table(const std::string& prefix) {
        std::map<std::string, double> out;
        for (auto& [key, value] : values_) {
            if (key.rfind(prefix + ".", 0) != 0) continue;
            consumed_.insert(key);
            if (value.kind != Value::Kind::number) fail(value.line, key, "a number");
            out[key.substr(prefix.size() + 1)] = value.num;
        }
        return out;
    }

    void reject_unconsumed() const {
        for (const auto& [key, value] : values_) {
            if (!consumed_.count(key)) {
                throw ConfigError(origin_ + ":" + std::to_string(value.line) + ": unknown field '" + key + "'");
            }
        }
    }

private:
    [[noreturn]] void fail(int line, const std::string& key, const std::string& want) {
        throw ConfigError(origin_ + ":" + std::to_string(line) + ": field '" + key + "' must be " + want);
    }
    std::map<std::string, Value> values_;
    std::set<std::string> consumed_;
    std::string origin_;
};

} // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_string(buffer.str(), path);
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text, const std::string& origin) {
    std::map<std::string, Value> values;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed table header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty table name");
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        const std::string full_key = section.empty() ? key : section + "." + key;
        if (values.count(full_key)) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + full_key + "'");
        }
        values[full_key] = parse_value(line.substr(eq + 1), origin, line_no);
    }

    KeyMap map(std::move(values), origin);
    ExperimentConfig cfg;
    cfg.kind = map.string("kind", "");
    cfg.preset = map.string("preset", "");
    cfg.eps = map.numbers("eps");
    cfg.n_samples = map.integer("n_samples", cfg.n_samples);
    cfg.dt = map.number("dt", cfg.dt);
    cfg.master_seed = static_cast<std::uint64_t>(map.integer("master_seed", 0));
    cfg.out_dir = map.string("out_dir", cfg.out_dir);
    cfg.workers = static_cast<int>(map.integer("workers", cfg.workers));
    cfg.dump_paths = map.boolean("dump_paths", cfg.dump_paths);
    cfg.clamp_cap = map.number("clamp_cap", cfg.clamp_cap);
    cfg.phi_cap = map.number("phi_cap", cfg.phi_cap);
    cfg.control_cache = map.string("control_cache", cfg.control_cache);
    cfg.model_overrides = map.numeric_table("model");
    {
        const std::vector<double> pts = map.numbers("grid.points");
        for (double p : pts) {
            if (std::floor(p) != p) throw ConfigError(origin + ": grid.points entries must be integers");
            cfg.grid_points.push_back(static_cast<int>(p));
        }
    }
    cfg.time_steps = static_cast<int>(map.integer("grid.time_steps", cfg.time_steps));
    cfg.store_slices = static_cast<int>(map.integer("grid.store_slices", cfg.store_slices));
    cfg.knots = static_cast<int>(map.integer("action.knots", cfg.knots));
    cfg.restarts = static_cast<int>(map.integer("action.restarts", cfg.restarts));
    map.reject_unconsumed();
    return cfg;
}

void ExperimentConfig::validate() const {
    static const char* kinds[] = {"mc", "is", "sweep", "hjb", "action", "compare"};
    if (std::find_if(std::begin(kinds), std::end(kinds),
                     [&](const char* k) { return kind == k; }) == std::end(kinds)) {
        throw ConfigError("field 'kind': unrecognized experiment kind '" + kind + "'");
    }
    if (preset.empty()) throw ConfigError("field 'preset': a model preset name is required");
    if (eps.empty()) throw ConfigError("field 'eps': at least one entry is required");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0)) {
            throw ConfigError("field 'eps[" + std::to_string(i) + "]': entries must be > 0 (got " +
                              std::to_string(eps[i]) + ")");
        }
    }
    if (n_samples < 2) throw ConfigError("field 'n_samples': need at least 2 samples");
    if (!(dt > 0.0)) throw ConfigError("field 'dt': must be > 0");
    if (workers < 0) throw ConfigError("field 'workers': must be >= 0 (0 = hardware)");
    if (!(phi_cap > 0.0)) throw ConfigError("field 'phi_cap': must be > 0");
    if (clamp_cap < 0.0) throw ConfigError("field 'clamp_cap': must be >= 0 (0 = default rule)");
    if (store_slices < 2) throw ConfigError("field 'grid.store_slices': must be >= 2");
    if (time_steps < 0) throw ConfigError("field 'grid.time_steps': must be >= 0 (0 = auto)");
    for (int p : grid_points) {
        if (p < 3) throw ConfigError("field 'grid.points': entries must be >= 3");
    }
    if (knots < 8) throw ConfigError("field 'action.knots': must be >= 8");
    if (restarts < 1) throw ConfigError("field 'action.restarts': must be >= 1");
    if (kind == "hjb" && eps.size() != 1) {
        throw ConfigError("field 'eps': kind=hjb expects exactly one eps entry");
    }
}

} // namespace raresim
