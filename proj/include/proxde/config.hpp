#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace proxde::config {

/// Field-level configuration error with the line and field that caused it.
class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, std::string field, const std::string& message)
        : std::runtime_error(format(line, field, message)), line_(line),
          field_(std::move(field)) {}

    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    static std::string format(int line, const std::string& field, const std::string& msg) {
        std::ostringstream os;
        os << "config error";
        if (line > 0) os << " (line " << line << ")";
        if (!field.empty()) os << " [" << field << "]";
        os << ": " << msg;
        return os.str();
    }

    int line_;
    std::string field_;
};

struct Value {
    std::variant<std::string, long long, double, bool, std::vector<double>> data;
    int line = 0;

    bool is_string() const { return std::holds_alternative<std::string>(data); }
    bool is_list() const { return std::holds_alternative<std::vector<double>>(data); }
};

/// Flat table of "section.key" entries parsed from the scenario text.
/// Format: "[section]" headers, "key = value" lines, "#" comments; values are
/// quoted strings, decimal numbers, 0x-prefixed integers, booleans, or arrays
/// of numbers.
class Table {
public:
    void insert(const std::string& key, Value v) { entries_[key] = std::move(v); }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    const Value& raw(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError(0, key, "missing required field");
        return it->second;
    }

    std::string str(const std::string& key) const {
        const Value& v = raw(key);
        if (!v.is_string()) throw ConfigError(v.line, key, "expected a string");
        return std::get<std::string>(v.data);
    }

    std::string str_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? str(key) : fallback;
    }

    double number(const std::string& key) const {
        const Value& v = raw(key);
        if (std::holds_alternative<double>(v.data)) return std::get<double>(v.data);
        if (std::holds_alternative<long long>(v.data))
            return static_cast<double>(std::get<long long>(v.data));
        throw ConfigError(v.line, key, "expected a number");
    }

    double number_or(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    long long integer(const std::string& key) const {
        const Value& v = raw(key);
        if (std::holds_alternative<long long>(v.data)) return std::get<long long>(v.data);
        if (std::holds_alternative<double>(v.data)) {
            double d = std::get<double>(v.data);
            long long i = static_cast<long long>(d);
            if (static_cast<double>(i) != d)
                throw ConfigError(v.line, key, "expected an integer");
            return i;
        }
        throw ConfigError(v.line, key, "expected an integer");
    }

    long long integer_or(const std::string& key, long long fallback) const {
        return has(key) ? integer(key) : fallback;
    }

    bool boolean_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const Value& v = raw(key);
        if (!std::holds_alternative<bool>(v.data))
            throw ConfigError(v.line, key, "expected true or false");
        return std::get<bool>(v.data);
    }

    std::vector<double> list(const std::string& key) const {
        const Value& v = raw(key);
        if (v.is_list()) return std::get<std::vector<double>>(v.data);
        if (std::holds_alternative<double>(v.data))
            return {std::get<double>(v.data)};
        if (std::holds_alternative<long long>(v.data))
            return {static_cast<double>(std::get<long long>(v.data))};
        throw ConfigError(v.line, key, "expected an array of numbers");
    }

    std::vector<double> list_or(const std::string& key, std::vector<double> fallback) const {
        return has(key) ? list(key) : std::move(fallback);
    }

    /// 64-bit seed given in hex ("0x..." string or bare integer).
    std::uint64_t seed(const std::string& key) const {
        const Value& v = raw(key);
        if (v.is_string()) {
            const std::string& s = std::get<std::string>(v.data);
            try {
                return std::stoull(s, nullptr, 16);
            } catch (const std::exception&) {
                throw ConfigError(v.line, key, "expected a hex seed like \"0x1234\"");
            }
        }
        if (std::holds_alternative<long long>(v.data))
            return static_cast<std::uint64_t>(std::get<long long>(v.data));
        throw ConfigError(v.line, key, "expected a hex seed");
    }

    int line_of(const std::string& key) const { return has(key) ? raw(key).line : 0; }

    const std::map<std::string, Value>& entries() const { return entries_; }

private:
    std::map<std::string, Value> entries_;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline Value parse_scalar(const std::string& token, int line, const std::string& field) {
    Value v;
    v.line = line;
    if (token.size() >= 2 && token.front() == '"' && token.back() == '"') {
        v.data = token.substr(1, token.size() - 2);
        return v;
    }
    if (token == "true" || token == "false") {
        v.data = (token == "true");
        return v;
    }
    if (token.rfind("0x", 0) == 0 || token.rfind("0X", 0) == 0) {
        try {
            v.data = static_cast<long long>(std::stoull(token, nullptr, 16));
            return v;
        } catch (const std::exception&) {
            throw ConfigError(line, field, "bad hex literal '" + token + "'");
        }
    }
    try {
        std::size_t used = 0;
        if (token.find('.') == std::string::npos && token.find('e') == std::string::npos
            && token.find('E') == std::string::npos) {
            long long i = std::stoll(token, &used);
            if (used == token.size()) {
                v.data = i;
                return v;
            }
        }
        double d = std::stod(token, &used);
        if (used != token.size())
            throw ConfigError(line, field, "bad number '" + token + "'");
        v.data = d;
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(line, field, "unrecognized value '" + token + "'");
    }
}

} // namespace detail

inline Table parse(const std::string& text) {
    Table table;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // strip comments outside of strings
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line = line.substr(0, i);
                break;
            }
        }
        std::string s = detail::trim(line);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError(lineno, "", "unterminated section header");
            section = detail::trim(s.substr(1, s.size() - 2));
            if (section.empty())
                throw ConfigError(lineno, "", "empty section name");
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(lineno, "", "expected 'key = value'");
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(lineno, "", "empty key");
        std::string field = section.empty() ? key : section + "." + key;
        if (val.empty()) throw ConfigError(lineno, field, "empty value");

        if (val.front() == '[') {
            if (val.back() != ']')
                throw ConfigError(lineno, field, "unterminated array");
            std::string body = val.substr(1, val.size() - 2);
            std::vector<double> items;
            std::string token;
            std::istringstream bs(body);
            while (std::getline(bs, token, ',')) {
                token = detail::trim(token);
                if (token.empty()) continue;
                Value sv = detail::parse_scalar(token, lineno, field);
                if (std::holds_alternative<double>(sv.data))
                    items.push_back(std::get<double>(sv.data));
                else if (std::holds_alternative<long long>(sv.data))
                    items.push_back(static_cast<double>(std::get<long long>(sv.data)));
                else
                    throw ConfigError(lineno, field, "arrays may hold numbers only");
            }
            Value v;
            v.line = lineno;
            v.data = std::move(items);
            table.insert(field, std::move(v));
        } else {
            table.insert(field, detail::parse_scalar(val, lineno, field));
        }
    }
    return table;
}

} // namespace proxde::config
