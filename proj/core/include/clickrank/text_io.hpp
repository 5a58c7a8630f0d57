#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clickrank {

std::vector<std::string> split(std::string_view line, char delimiter);
std::string join(const std::vector<std::string>& parts, char delimiter);
std::string join(const std::vector<std::string>& parts, const std::string& sep);

// Shortest round-trip decimal rendering (std::to_chars). Model and submission
// files must be byte-stable, so all floating-point output goes through here.
std::string format_double(double v);

double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace clickrank
