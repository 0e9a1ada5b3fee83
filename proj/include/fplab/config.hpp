#pragma once

// Strict JSON run configs. Every key a run understands is declared through a
// Block; anything else is rejected with its full path, and every effective
// value, defaults included, is echoed into a resolved copy so the output
// directory always records the exact parameters that produced it.

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fplab/common.hpp"

namespace fplab {

using Json = nlohmann::json;

// configuration problems exit with code 2, runtime failures with 1
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Json parse_config_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

// One object level of a config. Reads declare keys and echo the effective
// value into `resolved`; finish() then rejects anything undeclared.
class Block {
public:
    Block(const Json& obj, std::string path, Json& resolved)
        : obj_(&obj), path_(std::move(path)), resolved_(&resolved) {
        if (!obj_->is_object()) throw ConfigError(path_ + ": expected an object");
        if (!resolved_->is_object()) *resolved_ = Json::object();
    }

    const std::string& path() const { return path_; }

    bool has(const std::string& key) const { return obj_->contains(key); }

    double number(const std::string& key, double fallback) {
        const Json* v = use(key);
        if (!v) return echo(key, fallback);
        if (!v->is_number()) throw type_error(key, "a number");
        return echo(key, v->get<double>());
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        const Json* v = use(key);
        if (!v) return echo(key, fallback);
        if (!v->is_number_unsigned()) throw type_error(key, "a nonnegative integer");
        return echo(key, v->get<std::size_t>());
    }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        const Json* v = use(key);
        if (!v) return echo(key, fallback);
        if (!v->is_number_unsigned()) throw type_error(key, "a nonnegative integer");
        return echo(key, v->get<std::uint64_t>());
    }

    bool flag(const std::string& key, bool fallback) {
        const Json* v = use(key);
        if (!v) return echo(key, fallback);
        if (!v->is_boolean()) throw type_error(key, "a boolean");
        return echo(key, v->get<bool>());
    }

    std::string text(const std::string& key, const std::string& fallback) {
        const Json* v = use(key);
        if (!v) return echo(key, fallback);
        if (!v->is_string()) throw type_error(key, "a string");
        return echo(key, v->get<std::string>());
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        const Json* v = use(key);
        if (!v) return echo(key, std::move(fallback));
        if (!v->is_array()) throw type_error(key, "an array of numbers");
        std::vector<double> out;
        for (const Json& e : *v) {
            if (!e.is_number()) throw type_error(key, "an array of numbers");
            out.push_back(e.get<double>());
        }
        return echo(key, std::move(out));
    }

    std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback) {
        const Json* v = use(key);
        if (!v) return echo(key, std::move(fallback));
        if (!v->is_array()) throw type_error(key, "an array of nonnegative integers");
        std::vector<std::size_t> out;
        for (const Json& e : *v) {
            if (!e.is_number_unsigned())
                throw type_error(key, "an array of nonnegative integers");
            out.push_back(e.get<std::size_t>());
        }
        return echo(key, std::move(out));
    }

    // nested object; absent keys behave as an empty block of defaults
    Block child(const std::string& key) {
        const Json* v = use(key);
        (*resolved_)[key] = Json::object();
        return Block(v ? *v : empty_object(), path_ + "." + key, (*resolved_)[key]);
    }

    // array of objects, validated element-wise by the caller; element_resolved
    // entries must be pushed back through echo_element on the returned slot
    const Json& elements(const std::string& key) {
        const Json* v = use(key);
        (*resolved_)[key] = Json::array();
        if (!v) return empty_array();
        if (!v->is_array()) throw type_error(key, "an array of objects");
        return *v;
    }

    Json& element_slot(const std::string& key) {
        (*resolved_)[key].push_back(Json::object());
        return (*resolved_)[key].back();
    }

    void finish() const {
        for (const auto& item : obj_->items())
            if (!used_.count(item.key()))
                throw ConfigError("unknown key \"" + item.key() + "\" in " + path_);
    }

private:
    static const Json& empty_object() {
        static const Json kEmpty = Json::object();
        return kEmpty;
    }

    static const Json& empty_array() {
        static const Json kEmpty = Json::array();
        return kEmpty;
    }

    const Json* use(const std::string& key) {
        used_.insert(key);
        return obj_->contains(key) ? &obj_->at(key) : nullptr;
    }

    template <typename T>
    T echo(const std::string& key, T value) {
        (*resolved_)[key] = value;
        return value;
    }

    ConfigError type_error(const std::string& key, const std::string& want) const {
        return ConfigError(path_ + "." + key + ": expected " + want);
    }

    const Json* obj_;
    std::string path_;
    Json* resolved_;
    std::set<std::string> used_;
};

inline Json json_vec(const Vec& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(x);
    return a;
}

inline Json json_mat(const Mat& m) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

// sorted keys and shortest round-trip doubles, so equal runs give equal bytes
inline std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace fplab
