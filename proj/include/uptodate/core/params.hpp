#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace uptodate::core {

/// Reads scenario parameters out of a JSON object and rejects keys nobody asked for.
class ParamReader {
 public:
  ParamReader(const nlohmann::json& params, std::string scope)
      : params_(params), scope_(std::move(scope)) {
    if (!params_.is_null() && !params_.is_object())
      throw std::invalid_argument(scope_ + ": parameters must be an object");
  }

  template <typename T>
  ParamReader& read(const std::string& key, T& out) {
    known_.insert(key);
    if (params_.is_object() && params_.contains(key)) {
      try {
        out = params_.at(key).get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(scope_ + ": bad value for '" + key + "': " + e.what());
      }
    }
    return *this;
  }

  /// Throws std::invalid_argument naming the first unrecognized key.
  void finish() const {
    if (!params_.is_object()) return;
    for (const auto& [key, value] : params_.items()) {
      if (!known_.contains(key))
        throw std::invalid_argument(scope_ + ": unknown parameter '" + key + "'");
    }
  }

 private:
  const nlohmann::json& params_;
  std::string scope_;
  std::set<std::string> known_;
};

}  // namespace uptodate::core
