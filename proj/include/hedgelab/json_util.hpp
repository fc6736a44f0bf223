#pragma once

#include <set>
#include <string>
#include <utility>

#include <json.hpp>

#include "hedgelab/common.hpp"

namespace hedgelab {

// Reads known keys of one JSON object and rejects the rest, so that typos in
// config files surface as validation errors. Missing keys keep the target's
// current value.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), where_ + " must be an object");
  }

  template <class T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      require(seen_.count(item.key()) > 0, where_ + ": unknown key '" + item.key() + "'");
    }
  }

  [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }
  [[nodiscard]] const std::string& where() const { return where_; }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace hedgelab
