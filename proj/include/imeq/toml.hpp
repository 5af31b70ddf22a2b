#pragma once

// Minimal TOML subset reader for configuration files. Supported grammar:
//   - comments (# to end of line) and blank lines
//   - [section] headers, one nesting level; keys inside a section are
//     addressed as "section.key"
//   - key = value with value one of: "string", integer, float, boolean,
//     or a flat array of those scalars
// Dates, inline tables, arrays of tables, and multi-line strings are out
// of scope; encountering them raises ParseError with the line number.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "imeq/common.hpp"

namespace imeq {

struct TomlValue {
  enum class Kind { string, integer, floating, boolean, array };
  Kind kind = Kind::string;
  std::string str;
  long long int_v = 0;
  double float_v = 0.0;
  bool bool_v = false;
  std::vector<TomlValue> items;  // array elements (scalars only)

  // Numeric coercion: integers read as floats, never the reverse.
  double as_double() const;
  long long as_int() const;
};

class TomlTable {
 public:
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  // Typed getters; the non-defaulted forms throw ParseError when the key
  // is absent, every form throws on a type mismatch.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long dflt) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  const std::map<std::string, TomlValue>& values() const { return values_; }
  void set(const std::string& key, TomlValue v) { values_[key] = std::move(v); }

 private:
  const TomlValue& require(const std::string& key) const;
  std::map<std::string, TomlValue> values_;  // flattened "section.key"
};

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::string& path);

}  // namespace imeq
