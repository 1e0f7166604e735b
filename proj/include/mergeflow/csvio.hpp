#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mergeflow {

// Fixed-format float for byte-stable CSV output.
std::string format_double(double value, int precision = 6);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

// FNV-1a over bytes; used as the content hash recorded in run manifests.
std::uint64_t content_hash(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

// Writes <dir>/manifest.json with the resolved config, flags and a content
// hash of the config (the timestamp is informational only).
void write_manifest(const std::string& dir, const std::string& command,
                    const std::string& resolved_config_json,
                    const std::vector<std::pair<std::string, std::string>>& flags);

}  // namespace mergeflow
