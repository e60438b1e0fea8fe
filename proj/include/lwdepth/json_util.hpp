#pragma once

#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "lwdepth/error.hpp"

namespace lwdepth {

/// Throws ConfigError if j is not an object or holds a key outside `allowed`.
inline void require_known_keys(const nlohmann::json& j,
                               std::initializer_list<std::string_view> allowed,
                               std::string_view where) {
  if (!j.is_object()) {
    throw ConfigError(std::string(where) + " must be a JSON object");
  }
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || item.key() == a;
    if (!ok) {
      throw ConfigError("unknown key '" + item.key() + "' in " + std::string(where));
    }
  }
}

}  // namespace lwdepth
