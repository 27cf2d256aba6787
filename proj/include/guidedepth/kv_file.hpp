#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace guidedepth {

/// One `key = value` line; blank lines and `#` comments are skipped.
struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& origin);
std::vector<KeyValue> read_key_value_file(const std::filesystem::path& path);

/// Throws on duplicate keys.
std::map<std::string, std::string> to_map(const std::vector<KeyValue>& entries,
                                          const std::string& origin);

void write_key_value_file(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::string>>& entries,
                          const std::string& header_comment = "");

}  // namespace guidedepth
