#pragma once

// Flat "key = value" configuration text with [section] headers. Comments start with '#' or ';'.
// Numeric values accept products and quotients of literals and "pi", e.g. "4*pi" or "1/3".

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pnlt/error.hpp"

namespace pnlt {

class Config {
public:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static Config parse(std::istream& in, const std::string& source = "config") {
        Config c;
        c.source_ = source;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3)
                    throw ConfigError(source + ":" + std::to_string(lineno) + ": malformed section header '" + t + "'");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
            const std::string key = trim(t.substr(0, eq));
            if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            const std::string full = section.empty() ? key : section + "." + key;
            if (c.entries_.count(full))
                throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + full + "' (first set on line " +
                                  std::to_string(c.entries_[full].line) + ")");
            c.entries_[full] = {trim(t.substr(eq + 1)), lineno};
            c.order_.push_back(full);
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    const std::string& source() const noexcept { return source_; }
    bool has(const std::string& key) const { return entries_.count(key) > 0; }
    const std::vector<std::string>& keys() const noexcept { return order_; }

    const Entry* find(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    std::string get_string(const std::string& key, const std::optional<std::string>& fallback = std::nullopt) const {
        if (const auto* e = find(key)) return e->value;
        if (fallback) return *fallback;
        throw ConfigError(source_ + ": missing required key '" + key + "'");
    }

    double get_double(const std::string& key, std::optional<double> fallback = std::nullopt) const {
        const auto* e = find(key);
        if (!e) {
            if (fallback) return *fallback;
            throw ConfigError(source_ + ": missing required key '" + key + "'");
        }
        try {
            return eval_number(e->value);
        } catch (const ConfigError& err) {
            throw ConfigError(where(key) + ": " + err.what());
        }
    }

    int get_int(const std::string& key, std::optional<int> fallback = std::nullopt) const {
        const auto* e = find(key);
        if (!e) {
            if (fallback) return *fallback;
            throw ConfigError(source_ + ": missing required key '" + key + "'");
        }
        char* end = nullptr;
        const long v = std::strtol(e->value.c_str(), &end, 10);
        if (end == e->value.c_str() || *end != '\0') throw ConfigError(where(key) + ": expected an integer, got '" + e->value + "'");
        return static_cast<int>(v);
    }

    bool get_bool(const std::string& key, std::optional<bool> fallback = std::nullopt) const {
        const auto* e = find(key);
        if (!e) {
            if (fallback) return *fallback;
            throw ConfigError(source_ + ": missing required key '" + key + "'");
        }
        if (e->value == "true" || e->value == "yes" || e->value == "1") return true;
        if (e->value == "false" || e->value == "no" || e->value == "0") return false;
        throw ConfigError(where(key) + ": expected true/false, got '" + e->value + "'");
    }

    /// Whitespace- or comma-separated numbers.
    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        const auto* e = find(key);
        if (!e) return out;
        for (const auto& tok : split(e->value, ", \t")) {
            try {
                out.push_back(eval_number(tok));
            } catch (const ConfigError& err) {
                throw ConfigError(where(key) + ": " + err.what());
            }
        }
        return out;
    }

    /// Groups separated by ';', each a list of integers, e.g. "1 0; 0 1".
    std::vector<std::vector<int>> get_int_groups(const std::string& key) const {
        std::vector<std::vector<int>> out;
        const auto* e = find(key);
        if (!e) return out;
        for (const auto& group : split(e->value, ";")) {
            std::vector<int> g;
            for (const auto& tok : split(group, ", \t")) {
                char* end = nullptr;
                const long v = std::strtol(tok.c_str(), &end, 10);
                if (end == tok.c_str() || *end != '\0') throw ConfigError(where(key) + ": expected integers, got '" + tok + "'");
                g.push_back(static_cast<int>(v));
            }
            if (!g.empty()) out.push_back(std::move(g));
        }
        return out;
    }

    std::string where(const std::string& key) const {
        const auto* e = find(key);
        return source_ + (e ? ":" + std::to_string(e->line) : std::string()) + ": '" + key + "'";
    }

    /// product/quotient of factors; each factor is a number, "pi", or "-pi".
    static double eval_number(const std::string& text) {
        const std::string s = trim(text);
        if (s.empty()) throw ConfigError("empty numeric value");
        double acc = 1.0;
        char op = '*';
        std::size_t pos = 0;
        while (pos <= s.size()) {
            const std::size_t next = s.find_first_of("*/", pos);
            const std::string tok = trim(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
            double v;
            if (tok == "pi") {
                v = std::numbers::pi;
            } else if (tok == "-pi") {
                v = -std::numbers::pi;
            } else {
                char* end = nullptr;
                v = std::strtod(tok.c_str(), &end);
                if (tok.empty() || end == tok.c_str() || *end != '\0') throw ConfigError("not a number: '" + text + "'");
            }
            acc = op == '*' ? acc * v : acc / v;
            if (next == std::string::npos) break;
            op = s[next];
            pos = next + 1;
        }
        if (!std::isfinite(acc)) throw ConfigError("non-finite value: '" + text + "'");
        return acc;
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return {};
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

private:
    static std::string strip_comment(const std::string& s) {
        // ';' also separates integer groups, so it only starts a comment at the beginning of a line.
        const auto first = s.find_first_not_of(" \t");
        if (first != std::string::npos && s[first] == ';') return {};
        const auto hash = s.find('#');
        return hash == std::string::npos ? s : s.substr(0, hash);
    }

    static std::vector<std::string> split(const std::string& s, const char* seps) {
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (pos < s.size()) {
            const auto a = s.find_first_not_of(seps, pos);
            if (a == std::string::npos) break;
            const auto b = s.find_first_of(seps, a);
            out.push_back(s.substr(a, b == std::string::npos ? std::string::npos : b - a));
            pos = b == std::string::npos ? s.size() : b;
        }
        return out;
    }

    std::string source_;
    std::map<std::string, Entry> entries_;
    std::vector<std::string> order_;
};

} // namespace pnlt
