#include "qag/kv_config.hpp"

#include <sstream>

#include "json.hpp"
#include "qag/dataset_io.hpp"
#include "qag/errors.hpp"
#include "qag/utf8.hpp"

namespace qag {

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = utf8::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = utf8::trim(trimmed.substr(0, eq));
    std::string value = utf8::trim(trimmed.substr(eq + 1));
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    if (!value.empty() && value.front() == '"') {
      // The literal may be followed by a comment.
      try {
        auto end = value.find('"', 1);
        while (end != std::string::npos && value[end - 1] == '\\') end = value.find('"', end + 1);
        if (end == std::string::npos) throw ValidationError("unterminated string");
        value = nlohmann::json::parse(value.substr(0, end + 1)).get<std::string>();
      } catch (const std::exception& e) {
        throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
      }
    } else if (auto hash = value.find(" #"); hash != std::string::npos) {
      value = utf8::trim(value.substr(0, hash));
    }
    out[key] = value;
  }
  return out;
}

KeyValues load_key_values(const std::string& path) { return parse_key_values(read_file(path)); }

std::string format_key_values(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) {
    const bool quote = v.empty() || v != utf8::trim(v) || v.find('#') != std::string::npos ||
                       v.front() == '"';
    out += k + " = " + (quote ? nlohmann::json(v).dump() : v) + "\n";
  }
  return out;
}

}  // namespace qag
