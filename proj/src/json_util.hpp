#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "magicskin/error.hpp"

namespace magicskin::detail {

inline void require_object(const nlohmann::json& j, std::string_view context) {
  if (!j.is_object()) {
    throw Error(ErrorCode::ConfigError, std::string(context) + ": expected a JSON object");
  }
}

/// Rejects keys outside `allowed`.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view context) {
  require_object(j, context);
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) {
      throw Error(ErrorCode::ConfigError,
                  std::string(context) + ": unknown key '" + key + "'");
    }
  }
}

/// Reads `key` into `out` when present, translating type errors to ConfigError.
template <typename T>
void read_optional(const nlohmann::json& j, std::string_view key, T& out,
                   std::string_view context) {
  const auto it = j.find(std::string(key));
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError,
                std::string(context) + "." + std::string(key) + ": " + e.what());
  }
}

}  // namespace magicskin::detail
