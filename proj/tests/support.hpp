#pragma once

// Shared helpers for the unit and acceptance tests: a JSON-schema subset
// checker and golden-document comparison.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace lipci::testing {

using Json = nlohmann::ordered_json;

inline std::string data_dir() { return LIPCI_TEST_DATA_DIR; }
inline std::string golden_dir() { return LIPCI_TEST_GOLDEN_DIR; }
inline std::string schema_path() { return LIPCI_SCHEMA_PATH; }

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Json::parse(in);
}

/// Draft-07 subset: type, enum, const, required, properties,
/// additionalProperties (false), items, minItems, maxItems, minimum, maximum,
/// exclusiveMinimum, exclusiveMaximum, minLength, pattern, $ref (local),
/// allOf, oneOf. Errors are appended as "path: reason".
class SchemaChecker {
 public:
  explicit SchemaChecker(Json root) : root_(std::move(root)) {}

  std::vector<std::string> check(const Json& doc) const {
    std::vector<std::string> errors;
    visit(root_, doc, "$", errors);
    return errors;
  }

 private:
  const Json& resolve(const Json& schema) const {
    if (!schema.contains("$ref")) return schema;
    std::string ref = schema["$ref"].get<std::string>();
    if (ref.rfind("#/", 0) != 0) throw std::runtime_error("unsupported $ref " + ref);
    const Json* node = &root_;
    std::stringstream ss(ref.substr(2));
    std::string part;
    while (std::getline(ss, part, '/')) node = &(*node)[part];
    return resolve(*node);
  }

  static bool type_ok(const std::string& t, const Json& v) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer")
      return v.is_number_integer() ||
             (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    if (t == "number") return v.is_number();
    return false;
  }

  void visit(const Json& raw, const Json& v, const std::string& path,
             std::vector<std::string>& err) const {
    const Json& s = resolve(raw);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || type_ok(t.get<std::string>(), v);
      } else {
        ok = type_ok(s["type"].get<std::string>(), v);
      }
      if (!ok) {
        err.push_back(path + ": wrong type");
        return;
      }
    }
    if (s.contains("const") && v != s["const"]) err.push_back(path + ": const mismatch");
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) err.push_back(path + ": not in enum");
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>()) err.push_back(path + ": below minimum");
      if (s.contains("maximum") && x > s["maximum"].get<double>()) err.push_back(path + ": above maximum");
      if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
        err.push_back(path + ": not above exclusiveMinimum");
      if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
        err.push_back(path + ": not below exclusiveMaximum");
    }
    if (v.is_string()) {
      const auto str = v.get<std::string>();
      if (s.contains("minLength") && str.size() < s["minLength"].get<std::size_t>())
        err.push_back(path + ": too short");
      if (s.contains("pattern") && !std::regex_search(str, std::regex(s["pattern"].get<std::string>())))
        err.push_back(path + ": pattern mismatch");
    }
    if (v.is_object()) {
      if (s.contains("required"))
        for (const auto& k : s["required"])
          if (!v.contains(k.get<std::string>())) err.push_back(path + ": missing " + k.get<std::string>());
      const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (s.contains("properties") && s["properties"].contains(it.key()))
          visit(s["properties"][it.key()], it.value(), path + "." + it.key(), err);
        else if (closed)
          err.push_back(path + ": unexpected property " + it.key());
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) err.push_back(path + ": too few items");
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) err.push_back(path + ": too many items");
      if (s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i)
          visit(s["items"], v[i], path + "[" + std::to_string(i) + "]", err);
    }
    if (s.contains("allOf"))
      for (const auto& sub : s["allOf"]) visit(sub, v, path, err);
    if (s.contains("oneOf")) {
      int matches = 0;
      for (const auto& sub : s["oneOf"]) {
        std::vector<std::string> e;
        visit(sub, v, path, e);
        matches += e.empty() ? 1 : 0;
      }
      if (matches != 1)
        err.push_back(path + ": matches " + std::to_string(matches) + " oneOf branches");
    }
  }

  Json root_;
};

inline std::vector<std::string> schema_errors(const Json& doc) {
  static const SchemaChecker checker(load_json(schema_path()));
  return checker.check(doc);
}

/// Zeroes fields that legitimately vary between runs.
inline Json strip_volatile(Json doc) {
  if (doc.contains("timing")) doc["timing"]["seconds"] = 0.0;
  return doc;
}

/// Structural equality with numbers compared to a relative tolerance.
inline bool same_document(const Json& a, const Json& b, std::string& where,
                          const std::string& path = "$", double rel = 1e-12) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    if (std::abs(x - y) <= rel * std::max({1.0, std::abs(x), std::abs(y)})) return true;
    where = path + ": " + a.dump() + " vs " + b.dump();
    return false;
  }
  if (a.type() != b.type()) {
    where = path + ": type differs";
    return false;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) {
      where = path + ": key count differs";
      return false;
    }
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) {
        where = path + ": missing " + it.key();
        return false;
      }
      if (!same_document(it.value(), b[it.key()], where, path + "." + it.key(), rel)) return false;
    }
    return true;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) {
      where = path + ": length differs";
      return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!same_document(a[i], b[i], where, path + "[" + std::to_string(i) + "]", rel)) return false;
    return true;
  }
  if (a != b) {
    where = path + ": " + a.dump() + " vs " + b.dump();
    return false;
  }
  return true;
}

/// Runs `fn` with the working directory switched to `dir`.
template <class Fn>
auto in_directory(const std::string& dir, Fn fn) {
  struct Restore {
    std::filesystem::path old;
    ~Restore() { std::filesystem::current_path(old); }
  } restore{std::filesystem::current_path()};
  std::filesystem::current_path(dir);
  return fn();
}

}  // namespace lipci::testing
