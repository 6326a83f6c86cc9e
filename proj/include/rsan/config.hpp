#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rsan/errors.hpp"

namespace rsan {

// Plain-text key=value run configuration. '#' starts a comment, blank lines
// are ignored, keys are unique. Every key must be consumed by the command
// that loads the file; leftovers are typos and rejected.
class KeyValueConfig {
public:
    static KeyValueConfig parse_string(const std::string& text, const std::string& origin) {
        KeyValueConfig cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const std::size_t eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + " line " + std::to_string(lineno) +
                                  ": expected key=value");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(origin + " line " + std::to_string(lineno) + ": empty key");
            }
            if (cfg.values_.count(key)) {
                throw ConfigError(origin + " line " + std::to_string(lineno) +
                                  ": duplicate key '" + key + "'");
            }
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse_string(buf.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        accessed_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) {
        accessed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            throw ConfigError(origin_ + ": missing required key '" + key + "'");
        }
        return it->second;
    }

    double get_double(const std::string& key, double fallback) {
        accessed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_double(key, it->second);
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        accessed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_u64(key, it->second);
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) {
        return static_cast<std::size_t>(get_u64(key, fallback));
    }

    bool get_bool(const std::string& key, bool fallback) {
        accessed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(origin_ + ": key '" + key + "' must be true/false/1/0, got '" +
                          it->second + "'");
    }

    std::vector<double> get_double_list(const std::string& key,
                                        const std::string& fallback_csv) {
        accessed_.insert(key);
        auto it = values_.find(key);
        const std::string csv = it == values_.end() ? fallback_csv : it->second;
        std::vector<double> out;
        std::istringstream in(csv);
        std::string item;
        while (std::getline(in, item, ',')) {
            const std::string t = trim(item);
            if (t.empty()) continue;
            out.push_back(parse_double(key, t));
        }
        if (out.empty()) throw ConfigError(origin_ + ": key '" + key + "' holds no values");
        return out;
    }

    // Must be called after a command read everything it understands.
    void reject_unknown_keys() const {
        for (const auto& [key, value] : values_) {
            if (!accessed_.count(key)) {
                throw ConfigError(origin_ + ": unknown key '" + key + "'");
            }
        }
    }

    // Canonical text form: sorted key=value lines. This is what gets echoed
    // next to outputs and hashed into artifacts.
    std::string echo() const {
        std::string out;
        for (const auto& [key, value] : values_) {
            out += key;
            out += '=';
            out += value;
            out += '\n';
        }
        return out;
    }

    // FNV-1a over the canonical echo, minus out_dir: where a run writes does
    // not change what it computes, so relocated reruns keep their hash.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& [key, value] : values_) {
            if (key == "out_dir") continue;
            for (const std::string* part : {&key, &value}) {
                for (char c : *part) {
                    h ^= static_cast<unsigned char>(c);
                    h *= 0x100000001b3ULL;
                }
                h ^= static_cast<unsigned char>('\n');
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
        while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
        return s.substr(a, b - a);
    }

    double parse_double(const std::string& key, const std::string& text) const {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(text, &pos);
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not a number: '" + text + "'");
        }
        if (pos != text.size()) {
            throw ConfigError(origin_ + ": key '" + key + "' has trailing junk: '" + text + "'");
        }
        return v;
    }

    std::uint64_t parse_u64(const std::string& key, const std::string& text) const {
        std::size_t pos = 0;
        std::uint64_t v = 0;
        try {
            v = std::stoull(text, &pos);
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' is not an unsigned integer: '" +
                              text + "'");
        }
        if (pos != text.size()) {
            throw ConfigError(origin_ + ": key '" + key + "' has trailing junk: '" + text + "'");
        }
        return v;
    }

    std::string origin_ = "<config>";
    std::map<std::string, std::string> values_;
    std::set<std::string> accessed_;
};

}  // namespace rsan
