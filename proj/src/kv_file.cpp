#include "guidedepth/kv_file.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace guidedepth {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace

std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& origin) {
  std::vector<KeyValue> out;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(line) +
                                  ": expected 'key = value', got '" + body + "'");
    }
    KeyValue kv{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
    if (kv.key.empty()) {
      throw std::invalid_argument(origin + ":" + std::to_string(line) + ": empty key");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<KeyValue> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

std::map<std::string, std::string> to_map(const std::vector<KeyValue>& entries,
                                          const std::string& origin) {
  std::map<std::string, std::string> out;
  for (const auto& e : entries) {
    if (!out.emplace(e.key, e.value).second) {
      throw std::invalid_argument(origin + ":" + std::to_string(e.line) + ": duplicate key '" +
                                  e.key + "'");
    }
  }
  return out;
}

void write_key_value_file(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::string>>& entries,
                          const std::string& header_comment) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  if (!header_comment.empty()) os << "# " << header_comment << '\n';
  for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace guidedepth
