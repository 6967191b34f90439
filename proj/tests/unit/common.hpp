#pragma once

#include <string>

#include "hpgkit/io.hpp"
#include "json.hpp"

inline std::string source_path(const std::string& rel) { return std::string(HPGKIT_SOURCE_DIR) + "/" + rel; }
inline std::string fixture(const std::string& name) { return hpgkit::read_file(source_path("tests/fixtures/" + name)); }
inline nlohmann::json golden_json(const std::string& name) {
  return nlohmann::json::parse(hpgkit::read_file(source_path("tests/golden/" + name)));
}
