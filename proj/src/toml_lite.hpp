#pragma once

// Minimal TOML subset for the run config: [sections], string/number/bool
// scalars, flat homogeneous arrays, '#' comments. Parse errors carry line
// numbers.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace drivesafe::toml_lite {

struct Value {
  enum class Kind { String, Number, Boolean, Array } kind = Kind::String;
  std::string str;
  double number = 0.0;
  bool boolean = false;
  std::vector<Value> array;
};

using Table = std::map<std::string, Value>;  // key = "section.name"

Table parse_file(const std::filesystem::path& path);
Table parse_string(const std::string& text, const std::string& origin);

}  // namespace drivesafe::toml_lite
