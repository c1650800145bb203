// Copyright Contributors to the sehdr project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sehdr/common.hpp"

namespace sehdr {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

}  // namespace detail

// Flat key-value settings. Keys are lowercase dotted names; values are the
// raw text after '='. Reads are tracked so the schema owner can reject keys
// nothing consumed, which is how typos surface as errors instead of silent
// defaults.
class Config {
  public:
    void set(const std::string& key, const std::string& value) {
        if (!detail::valid_key(key)) throw UsageError("config: bad key '" + key + "'");
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // Parses "key = value" lines. '#' starts a comment, blank lines are
    // skipped, duplicate keys are rejected rather than silently overridden.
    static Config parse(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
            }
            const std::string key = detail::trim(line.substr(0, eq));
            if (!detail::valid_key(key)) {
                throw UsageError("config line " + std::to_string(lineno) + ": bad key '" + key +
                                 "'");
            }
            if (cfg.values_.count(key) != 0) {
                throw UsageError("config line " + std::to_string(lineno) + ": duplicate key '" +
                                 key + "'");
            }
            cfg.values_[key] = detail::trim(line.substr(eq + 1));
        }
        return cfg;
    }

    // Applies a command-line "key=value" override on top of file values.
    void apply_override(const std::string& assignment) {
        const std::size_t eq = assignment.find('=');
        if (eq == std::string::npos) {
            throw UsageError("override '" + assignment + "': expected key=value");
        }
        set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) {
        const std::string raw = get_string(key, "");
        if (raw.empty()) return fallback;
        return parse_double(key, raw);
    }

    int get_int(const std::string& key, int fallback) {
        const std::string raw = get_string(key, "");
        if (raw.empty()) return fallback;
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(raw, &used);
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': not an integer: '" + raw + "'");
        }
        if (used != raw.size()) {
            throw UsageError("config key '" + key + "': not an integer: '" + raw + "'");
        }
        return v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        const std::string raw = get_string(key, "");
        if (raw.empty()) return fallback;
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(raw, &used);
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': not an unsigned integer: '" + raw + "'");
        }
        if (used != raw.size()) {
            throw UsageError("config key '" + key + "': not an unsigned integer: '" + raw + "'");
        }
        return static_cast<std::uint64_t>(v);
    }

    bool get_bool(const std::string& key, bool fallback) {
        const std::string raw = get_string(key, "");
        if (raw.empty()) return fallback;
        if (raw == "true" || raw == "1" || raw == "on") return true;
        if (raw == "false" || raw == "0" || raw == "off") return false;
        throw UsageError("config key '" + key + "': not a boolean: '" + raw + "'");
    }

    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) {
        const std::string raw = get_string(key, "");
        if (raw.empty()) return fallback;
        std::vector<double> out;
        for (const std::string& item : split_list(raw)) out.push_back(parse_double(key, item));
        return out;
    }

    std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) {
        const std::string raw = get_string(key, "");
        if (raw.empty()) return fallback;
        std::vector<int> out;
        for (const std::string& item : split_list(raw)) {
            std::size_t used = 0;
            int v = 0;
            try {
                v = std::stoi(item, &used);
            } catch (const std::exception&) {
                throw UsageError("config key '" + key + "': not an integer list: '" + raw + "'");
            }
            if (used != item.size()) {
                throw UsageError("config key '" + key + "': not an integer list: '" + raw + "'");
            }
            out.push_back(v);
        }
        return out;
    }

    // Keys present in the document but never consumed by the schema.
    void require_all_consumed() const {
        std::string unknown;
        for (const auto& [key, value] : values_) {
            if (consumed_.count(key) == 0) {
                if (!unknown.empty()) unknown += ", ";
                unknown += key;
            }
        }
        if (!unknown.empty()) throw UsageError("config: unknown keys: " + unknown);
    }

  private:
    static std::vector<std::string> split_list(const std::string& raw) {
        std::vector<std::string> items;
        std::string cur;
        std::istringstream in(raw);
        while (std::getline(in, cur, ',')) items.push_back(detail::trim(cur));
        if (items.empty()) items.push_back(detail::trim(raw));
        return items;
    }

    static double parse_double(const std::string& key, const std::string& raw) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(raw, &used);
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "': not a number: '" + raw + "'");
        }
        if (used != raw.size()) {
            throw UsageError("config key '" + key + "': not a number: '" + raw + "'");
        }
        return v;
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

}  // namespace sehdr
