#pragma once

#include <set>
#include <string>
#include <type_traits>

#include "growlab/util/errors.hpp"
#include "json.hpp"

namespace growlab {

/// Reads optional keys out of a JSON object and rejects anything left over.
/// Every error names the full key path, e.g. "schedule.warmup_steps".
class JsonFields {
public:
    JsonFields(const nlohmann::json& object, std::string path) : object_(object), path_(std::move(path)) {
        if (!object_.is_object()) throw ConfigError(path_, "expected a JSON object");
    }

    std::string path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return object_.contains(key); }

    const nlohmann::json& raw(const std::string& key) {
        seen_.insert(key);
        return object_.at(key);
    }

    /// Leaves `out` untouched when the key is absent.
    template <typename V>
    void get(const std::string& key, V& out) {
        if (!object_.contains(key)) return;
        seen_.insert(key);
        const auto& v = object_.at(key);
        if constexpr (std::is_same_v<V, bool>) {
            if (!v.is_boolean()) throw ConfigError(path_of(key), "expected a boolean");
        } else if constexpr (std::is_integral_v<V> && std::is_unsigned_v<V>) {
            if (!v.is_number_unsigned()) throw ConfigError(path_of(key), "expected a non-negative integer");
        } else if constexpr (std::is_integral_v<V>) {
            if (!v.is_number_integer()) throw ConfigError(path_of(key), "expected an integer");
        } else if constexpr (std::is_floating_point_v<V>) {
            if (!v.is_number()) throw ConfigError(path_of(key), "expected a number");
        } else if constexpr (std::is_same_v<V, std::string>) {
            if (!v.is_string()) throw ConfigError(path_of(key), "expected a string");
        }
        out = v.get<V>();
    }

    /// Throws ConfigError for the first key that was never read.
    void finish() const {
        for (auto it = object_.begin(); it != object_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(path_of(it.key()), "unknown key");
        }
    }

private:
    const nlohmann::json& object_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace growlab
