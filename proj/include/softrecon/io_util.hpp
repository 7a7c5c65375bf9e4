#pragma once

#include <string>
#include <vector>

namespace softrecon::io {

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);  // throws IoError

/// printf %.*g with 9 significant digits by default (the log/CSV contract);
/// 17 digits round-trips doubles exactly for raw dumps.
std::string fmt_g(double v, int digits = 9);

std::vector<std::string> split(const std::string& line, char sep);

std::string read_file(const std::string& path);                       // throws IoError
void write_file(const std::string& path, const std::string& bytes);  // throws IoError

}  // namespace softrecon::io
