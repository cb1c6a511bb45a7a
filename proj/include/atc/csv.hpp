#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace atc::csv {

/// Split one CSV line on commas. Fields never contain commas or quotes in
/// any of the formats this toolkit reads or writes.
std::vector<std::string> split(const std::string& line);

/// Read all lines of a file; throws std::runtime_error naming the path when
/// the file cannot be opened.
std::vector<std::string> read_lines(const std::string& path);

bool parse_double(const std::string& s, double& out);
bool parse_int(const std::string& s, std::int64_t& out);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

void write_file(const std::string& path, const std::string& content);

}  // namespace atc::csv
