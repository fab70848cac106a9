#pragma once

#include <map>
#include <string>
#include <string_view>

namespace qag {

// Flat key-value config files:
//
//   # comment
//   key = value
//   separator = " | "     # JSON string literal keeps surrounding spaces
//
// Later keys override earlier ones.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::string& path);
std::string format_key_values(const KeyValues& values);

}  // namespace qag
