#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace neurozip::text {

/// Shortest representation that parses back to the identical double.
std::string format_double(double value);

/// Parses a full-field double; returns false on trailing garbage or failure.
bool parse_double(std::string_view s, double& out);
bool parse_uint(std::string_view s, std::uint64_t& out);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char delim);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace neurozip::text
