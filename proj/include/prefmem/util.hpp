#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace prefmem::util {

std::string trim(std::string_view s);

// Trims and squeezes internal whitespace runs to a single space.
std::string collapse_whitespace(std::string_view s);

std::string to_lower(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

// Case-insensitive substring search.
bool icontains(std::string_view haystack, std::string_view needle);

// Lowercased alphanumeric token runs; everything else is a separator.
std::vector<std::string> tokenize(std::string_view text);

uint64_t fnv1a64(std::string_view s);

// "2025-01-31T12:00:00Z"
std::string utc_now_iso8601();

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace prefmem::util
