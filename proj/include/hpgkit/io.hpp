#pragma once

#include <string>
#include <vector>

namespace hpgkit {

std::string read_file(const std::string& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

std::vector<std::string> read_lines(const std::string& path);

/// Worker cap from HPGKIT_THREADS (default: hardware concurrency, min 1).
unsigned worker_count();

}  // namespace hpgkit
