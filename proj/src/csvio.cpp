#include "mergeflow/csvio.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mergeflow {

std::string format_double(double value, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, value);
  return buf;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  auto join = [&os](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os << ',';
      os << fields[i];
    }
    os << '\n';
  };
  join(table.header);
  for (const auto& row : table.rows) join(row);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_csv: cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

std::uint64_t content_hash(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::string& resolved_config_json,
                    const std::vector<std::pair<std::string, std::string>>& flags) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["command"] = command;
  j["config"] = nlohmann::json::parse(resolved_config_json);
  nlohmann::json f;
  for (const auto& [k, v] : flags) f[k] = v;
  j["flags"] = f;
  j["content_hash"] = hash_hex(content_hash(resolved_config_json));
  const auto now = std::chrono::system_clock::now();
  j["created_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                          now.time_since_epoch())
                          .count();
  std::ofstream os(std::filesystem::path(dir) / "manifest.json");
  if (!os) throw std::runtime_error("write_manifest: cannot write to " + dir);
  os << j.dump(2) << '\n';
}

}  // namespace mergeflow
