#ifndef KAWASAKI_CONFIG_HPP
#define KAWASAKI_CONFIG_HPP

// Flat `key = value` parameter files with `#` comments.

#include "kawasaki/params.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kawasaki {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& s, int line, const std::string& key) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("value of '" + key + "' is not a number: '" + s + "'", line);
    }
}

}  // namespace detail

class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& in) {
        KeyValueFile kv;
        std::string raw;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            const auto hash = raw.find('#');
            std::string body = detail::trim(raw.substr(0, hash));
            if (body.empty()) continue;
            const auto eq = body.find('=');
            if (eq == std::string::npos) throw ParseError("expected 'key = value'", line);
            std::string key = detail::trim(body.substr(0, eq));
            std::string value = detail::trim(body.substr(eq + 1));
            if (key.empty()) throw ParseError("empty key", line);
            if (kv.entries_.count(key)) throw ParseError("duplicate key '" + key + "'", line);
            kv.entries_[key] = {value, line};
        }
        return kv;
    }

    static KeyValueFile parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open '" + path + "'", 0);
        return parse(in);
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback = {}) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second.value;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        return detail::parse_double(it->second.value, it->second.line, key);
    }

    std::optional<double> get_optional(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return detail::parse_double(it->second.value, it->second.line, key);
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const auto& s = it->second.value;
        long long v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ParseError("value of '" + key + "' is not an integer: '" + s + "'",
                             it->second.line);
        return v;
    }

    std::vector<double> get_list(const std::string& key) const {
        std::vector<double> out;
        auto it = entries_.find(key);
        if (it == entries_.end()) return out;
        std::string item;
        std::istringstream in(it->second.value);
        while (std::getline(in, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) out.push_back(detail::parse_double(item, it->second.line, key));
        }
        return out;
    }

    const auto& entries() const { return entries_; }

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::map<std::string, Entry> entries_;
};

inline ModelParams model_params_from(const KeyValueFile& kv) {
    ModelParams p;
    p.U = kv.get_double("U", p.U);
    p.Delta = kv.get_double("Delta", p.Delta);
    p.beta = kv.get_double("beta", p.beta);
    p.Theta = kv.get_double("Theta", p.Theta);
    p.alpha = kv.get_optional("alpha");
    p.d = kv.get_optional("d");
    p.kappa = kv.get_optional("kappa");
    p.delta = kv.get_optional("delta");
    p.C_star = kv.get_optional("C_star");
    const auto lam = kv.get_string("lambda", "sqrt-log");
    if (lam == "sqrt-log") {
        p.lambda_choice = LambdaChoice::SqrtLog;
    } else if (lam == "constant") {
        p.lambda_choice = LambdaChoice::Constant;
        p.lambda_constant = kv.get_double("lambda_constant", 1.0);
    } else {
        throw ParamError("unknown lambda choice '" + lam + "' (expected sqrt-log or constant)");
    }
    return p;
}

}  // namespace kawasaki

#endif
