#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "milab/error.hpp"

namespace milab {

using Json = nlohmann::json;

// Reads fields of a JSON object; finish() rejects any key that was never
// read, so typos in config files fail instead of being ignored.
class JsonReader {
 public:
  JsonReader(const Json& object, std::string context);

  template <class T>
  void optional(const char* key, T& out) {
    if (const Json* v = find(key)) convert(key, *v, out);
  }

  template <class T>
  void required(const char* key, T& out) {
    const Json* v = find(key);
    if (!v) throw ConfigError(context_ + ": missing required key '" + key + "'");
    convert(key, *v, out);
  }

  // Marks a key as known and returns it, or null when absent.
  const Json* find(const char* key);
  void finish() const;

 private:
  template <class T>
  void convert(const char* key, const Json& v, T& out) {
    try {
      out = v.get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(context_ + ": key '" + key + "' has the wrong type");
    }
  }

  const Json& object_;
  std::string context_;
  std::set<std::string> seen_;
};

// FNV-1a over the canonical (sorted-key, compact) dump; 16 hex digits.
std::string config_hash(const Json& config);
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace milab
