#include "imeq/toml.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace imeq {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw ParseError("toml line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Removes a trailing comment, respecting quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      return false;
  return true;
}

TomlValue parse_scalar(const std::string& raw, int line) {
  TomlValue v;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    v.kind = TomlValue::Kind::string;
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      char c = raw[i];
      if (c == '\\') {
        if (i + 2 >= raw.size() + 1) fail(line, "dangling escape");
        char e = raw[++i];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(line, std::string("unsupported escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    v.str = out;
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.kind = TomlValue::Kind::boolean;
    v.bool_v = raw == "true";
    return v;
  }
  // Integer: optional sign followed by digits only.
  bool is_int = !raw.empty();
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (i == 0 && (c == '+' || c == '-')) {
      if (raw.size() == 1) is_int = false;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      is_int = false;
      break;
    }
  }
  if (is_int) {
    v.kind = TomlValue::Kind::integer;
    v.int_v = std::strtoll(raw.c_str(), nullptr, 10);
    v.float_v = static_cast<double>(v.int_v);
    return v;
  }
  char* end = nullptr;
  double d = std::strtod(raw.c_str(), &end);
  if (end && *end == '\0' && end != raw.c_str()) {
    v.kind = TomlValue::Kind::floating;
    v.float_v = d;
    return v;
  }
  fail(line, "cannot parse value '" + raw + "'");
}

// Splits a [ ... ] body at top-level commas (strings may contain commas).
std::vector<std::string> split_array(const std::string& body, int line) {
  std::vector<std::string> parts;
  std::string cur;
  bool in_str = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) in_str = !in_str;
    if (c == '[' && !in_str) fail(line, "nested arrays are not supported");
    if (c == ',' && !in_str) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_str) fail(line, "unterminated string in array");
  if (!trim(cur).empty()) parts.push_back(cur);
  std::vector<std::string> out;
  for (const std::string& p : parts) {
    std::string t = trim(p);
    if (t.empty()) fail(line, "empty array element");
    out.push_back(t);
  }
  return out;
}

}  // namespace

double TomlValue::as_double() const {
  if (kind == Kind::floating || kind == Kind::integer) return float_v;
  throw ParseError("toml: value is not a number");
}

long long TomlValue::as_int() const {
  if (kind == Kind::integer) return int_v;
  throw ParseError("toml: value is not an integer");
}

const TomlValue& TomlTable::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParseError("toml: missing key '" + key + "'");
  return it->second;
}

std::string TomlTable::get_string(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::string)
    throw ParseError("toml: key '" + key + "' is not a string");
  return v.str;
}

std::string TomlTable::get_string(const std::string& key,
                                  const std::string& dflt) const {
  return has(key) ? get_string(key) : dflt;
}

long long TomlTable::get_int(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::integer)
    throw ParseError("toml: key '" + key + "' is not an integer");
  return v.int_v;
}

long long TomlTable::get_int(const std::string& key, long long dflt) const {
  return has(key) ? get_int(key) : dflt;
}

std::uint64_t TomlTable::get_u64(const std::string& key,
                                 std::uint64_t dflt) const {
  if (!has(key)) return dflt;
  long long v = get_int(key);
  if (v < 0) throw ParseError("toml: key '" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

double TomlTable::get_double(const std::string& key) const {
  return require(key).as_double();
}

double TomlTable::get_double(const std::string& key, double dflt) const {
  return has(key) ? get_double(key) : dflt;
}

bool TomlTable::get_bool(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::boolean)
    throw ParseError("toml: key '" + key + "' is not a boolean");
  return v.bool_v;
}

std::vector<double> TomlTable::get_double_array(const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::array)
    throw ParseError("toml: key '" + key + "' is not an array");
  std::vector<double> out;
  for (const TomlValue& e : v.items) out.push_back(e.as_double());
  return out;
}

std::vector<std::uint64_t> TomlTable::get_u64_array(
    const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::array)
    throw ParseError("toml: key '" + key + "' is not an array");
  std::vector<std::uint64_t> out;
  for (const TomlValue& e : v.items) {
    long long i = e.as_int();
    if (i < 0) throw ParseError("toml: key '" + key + "' has negative entry");
    out.push_back(static_cast<std::uint64_t>(i));
  }
  return out;
}

std::vector<std::string> TomlTable::get_string_array(
    const std::string& key) const {
  const TomlValue& v = require(key);
  if (v.kind != TomlValue::Kind::array)
    throw ParseError("toml: key '" + key + "' is not an array");
  std::vector<std::string> out;
  for (const TomlValue& e : v.items) {
    if (e.kind != TomlValue::Kind::string)
      throw ParseError("toml: key '" + key + "' has a non-string entry");
    out.push_back(e.str);
  }
  return out;
}

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::istringstream in(text);
  std::string raw_line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw_line)) {
    ++line_no;
    std::string line = trim(strip_comment(raw_line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty() || name.front() == '[')
        fail(line_no, "arrays of tables are not supported");
      if (!valid_key(name)) fail(line_no, "bad section name '" + name + "'");
      section = name;
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!valid_key(key)) fail(line_no, "bad key '" + key + "'");
    if (val.empty()) fail(line_no, "missing value for key '" + key + "'");
    std::string full = section.empty() ? key : section + "." + key;
    if (table.has(full)) fail(line_no, "duplicate key '" + full + "'");
    TomlValue v;
    if (val.front() == '[') {
      if (val.back() != ']') fail(line_no, "unterminated array");
      v.kind = TomlValue::Kind::array;
      for (const std::string& part :
           split_array(val.substr(1, val.size() - 2), line_no))
        v.items.push_back(parse_scalar(part, line_no));
    } else {
      v = parse_scalar(val, line_no);
    }
    table.set(full, std::move(v));
  }
  return table;
}

TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_toml(ss.str());
}

}  // namespace imeq
