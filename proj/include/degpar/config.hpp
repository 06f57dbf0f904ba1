#pragma once

// Flat experiment configuration: one "key = value" per line, '#' comments,
// typed keys with explicit defaults. The schema below is the single source
// of defaults for every experiment.

#include "degpar/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace degpar {

class ConfigError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

enum class KeyType { Int, Real, RealList, IntList, Text };

struct KeySpec {
    const char* name;
    KeyType type;
    const char* fallback;  // default, in config syntax
    const char* doc;
};

inline const std::vector<KeySpec>& config_schema() {
    static const std::vector<KeySpec> schema{
        {"a", KeyType::Real, "0.5", "weight exponent"},
        {"eps", KeyType::Real, "0", "regularization parameter of the weight (0 = singular/degenerate)"},
        {"n_x", KeyType::Int, "1", "number of tangential variables N"},
        {"L", KeyType::Real, "1", "half-width of the x-box [-L,L]^N"},
        {"y_max", KeyType::Real, "1", "height of the half-box [0,y_max]"},
        {"nx", KeyType::Int, "16", "cells per x-axis"},
        {"ny", KeyType::Int, "16", "cells along y"},
        {"nt", KeyType::Int, "16", "time steps (output levels - 1)"},
        {"t0", KeyType::Real, "-1", "initial time"},
        {"t1", KeyType::Real, "1", "final time"},
        {"theta", KeyType::Real, "0.5", "time-stepping parameter in [1/2,1]"},
        {"tolerance", KeyType::Real, "1e-12", "relative CG tolerance"},
        {"max_iterations", KeyType::Int, "0", "CG iteration cap (0 = 10 x unknowns)"},
        {"startup_steps", KeyType::Int, "2", "leading steps taken as two implicit Euler half-steps"},
        {"p", KeyType::Real, "9", "integrability exponent of f"},
        {"q", KeyType::Real, "12", "integrability exponent of F"},
        {"alpha", KeyType::Real, "0.5", "Holder exponent (0 = the largest value the gates allow)"},
        {"order", KeyType::Int, "0", "Holder order (0 or 1)"},
        {"eps_list", KeyType::RealList, "0.8 0.4 0.2 0.1 0.05", "strictly decreasing eps sweep (eps = 0 is added)"},
        {"ny_list", KeyType::IntList, "32 64 128", "refinement levels (cells along y)"},
        {"case", KeyType::Text, "g2", "manufactured case: g2 (g_2 + t, f = 0), g2_forced (g_2 + 2t, f = 1), quadratic"},
        {"samples", KeyType::Int, "5", "number of seeded random initial data"},
        {"source", KeyType::Real, "0", "constant source f for solve"},
        {"flux", KeyType::Real, "0", "constant normal flux component F_y for solve"},
        {"depth", KeyType::Int, "16", "dyadic depth of the Muckenhoupt estimate"},
        {"delta", KeyType::Real, "1e-3", "De Giorgi smallness threshold for E_0"},
        {"levels", KeyType::Int, "8", "De Giorgi ledger depth J"},
        {"factor", KeyType::Real, "2", "allowed max/min spread over an eps sweep"},
        {"min_order", KeyType::Real, "1.9", "required observed convergence order"},
        {"min_relation_order", KeyType::Real, "1.8", "required order of the g_i relation residuals"},
        {"min_reduction", KeyType::Real, "1.8", "required residual reduction per halving"},
        {"gap_tolerance", KeyType::Real, "0.1", "allowed relative gap between eps -> 0 and eps = 0"},
        {"y0", KeyType::Real, "0", "lower y-threshold of the eps-sweep norm region (0 = four y-cells)"},
        {"max_index", KeyType::Int, "4", "largest g_i index in the Liouville checks"},
        {"y_far", KeyType::Real, "100", "upper end of the asymptotic window [y_far/10, y_far]"},
        {"phi_coefficient", KeyType::Real, "0.2", "curved boundary phi(x) = c |x|^2"},
    };
    return schema;
}

inline const KeySpec* find_key(const std::string& name) {
    for (const auto& k : config_schema())
        if (name == k.name) return &k;
    return nullptr;
}

class Config {
public:
    using Value = std::variant<long long, double, std::vector<double>, std::vector<long long>, std::string>;

    /// Every key at its default.
    Config() {
        for (const auto& k : config_schema()) values_[k.name] = parse_value(k, k.fallback, "default");
    }

    static Config parse(std::istream& is, const std::string& source = "config") {
        Config c;
        std::map<std::string, int> seen;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string where = source + ":" + std::to_string(lineno);
            if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
            const std::string key = trim(line.substr(0, eq));
            const KeySpec* ks = find_key(key);
            if (!ks) throw ConfigError(where + ": unknown key '" + key + "'");
            if (seen.count(key))
                throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " +
                                  std::to_string(seen[key]) + ")");
            seen[key] = lineno;
            c.values_[key] = parse_value(*ks, trim(line.substr(eq + 1)), where);
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    /// Overrides from "key = value" strings, as in a config file.
    Config& set(const std::string& key, const std::string& value) {
        const KeySpec* ks = find_key(key);
        if (!ks) throw ConfigError("unknown key '" + key + "'");
        values_[key] = parse_value(*ks, value, key);
        return *this;
    }

    [[nodiscard]] long long integer(const std::string& k) const { return std::get<long long>(at(k)); }
    [[nodiscard]] int small(const std::string& k) const { return static_cast<int>(integer(k)); }
    [[nodiscard]] double real(const std::string& k) const { return std::get<double>(at(k)); }
    [[nodiscard]] const std::vector<double>& reals(const std::string& k) const {
        return std::get<std::vector<double>>(at(k));
    }
    [[nodiscard]] const std::vector<long long>& integers(const std::string& k) const {
        return std::get<std::vector<long long>>(at(k));
    }
    [[nodiscard]] const std::string& text(const std::string& k) const { return std::get<std::string>(at(k)); }

    /// All effective values, keys sorted.
    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : values_) std::visit([&](const auto& x) { j[k] = x; }, v);
        return j;
    }

    /// Markdown table of the schema (used for the documentation).
    static std::string schema_table() {
        std::ostringstream os;
        os << "| key | type | default | meaning |\n|---|---|---|---|\n";
        for (const auto& k : config_schema()) {
            static const char* names[] = {"int", "real", "real list", "int list", "text"};
            os << "| `" << k.name << "` | " << names[static_cast<int>(k.type)] << " | `" << k.fallback << "` | "
               << k.doc << " |\n";
        }
        return os.str();
    }

private:
    std::map<std::string, Value> values_;

    const Value& at(const std::string& k) const {
        const auto it = values_.find(k);
        if (it == values_.end()) throw ConfigError("no such key '" + k + "'");
        return it->second;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    }

    static std::vector<std::string> tokens(const std::string& s) {
        std::istringstream is(s);
        std::vector<std::string> out;
        std::string t;
        while (is >> t) out.push_back(t);
        return out;
    }

    static double to_real(const std::string& t, const std::string& where, const char* key) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != t.size() || !std::isfinite(v))
            throw ConfigError(where + ": key '" + key + "' expects a finite real, got '" + t + "'");
        return v;
    }

    static long long to_int(const std::string& t, const std::string& where, const char* key) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != t.size()) throw ConfigError(where + ": key '" + key + "' expects an integer, got '" + t + "'");
        return v;
    }

    static Value parse_value(const KeySpec& k, const std::string& raw, const std::string& where) {
        const auto tok = tokens(raw);
        const bool list = k.type == KeyType::RealList || k.type == KeyType::IntList;
        if (tok.empty()) throw ConfigError(where + ": key '" + std::string(k.name) + "' has no value");
        if (!list && tok.size() != 1)
            throw ConfigError(where + ": key '" + std::string(k.name) + "' takes a single value");
        switch (k.type) {
            case KeyType::Int: return to_int(tok[0], where, k.name);
            case KeyType::Real: return to_real(tok[0], where, k.name);
            case KeyType::Text: return tok[0];
            case KeyType::RealList: {
                std::vector<double> v;
                for (const auto& t : tok) v.push_back(to_real(t, where, k.name));
                return v;
            }
            case KeyType::IntList: {
                std::vector<long long> v;
                for (const auto& t : tok) v.push_back(to_int(t, where, k.name));
                return v;
            }
        }
        throw ConfigError("unreachable key type");
    }
};

}  // namespace degpar
