#pragma once

#include <fstream>
#include <sstream>
#include <string>

inline std::string source_path(const std::string& rel) { return std::string(WNOS_SOURCE_DIR) + "/" + rel; }

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream b;
  b << f.rdbuf();
  return b.str();
}
