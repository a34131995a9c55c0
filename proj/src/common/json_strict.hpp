#pragma once

// Strict reading of flat JSON objects: every key must be consumed, and type
// errors are reported with the dotted key path.

#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "nnd/error.hpp"

namespace nnd::json_strict {

class Object {
 public:
  Object(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    try {
      return it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  T required(const std::string& key) {
    auto v = optional<T>(key);
    if (!v) throw ConfigError(where_ + ": missing required key \"" + key + "\"");
    return *v;
  }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  /// Throws on any key that was never asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(where_ + ": unknown key \"" + it.key() + "\"");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace nnd::json_strict
