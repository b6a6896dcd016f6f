#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small string helpers shared across modules.
namespace qw::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

// Lowercases and collapses every whitespace run to one space.
std::string normalize(std::string_view s);

// Splits on '\n'. A trailing newline does not produce an empty last line.
std::vector<std::string> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool is_space(char c);

}  // namespace qw::text
