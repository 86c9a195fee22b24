#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace physforge {

std::string_view ltrim(std::string_view s);
std::string_view rtrim(std::string_view s);
std::string_view trim(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Replaces every occurrence of `from` in `text` (no overlap re-scan).
std::string replace_all(std::string text, std::string_view from,
                        std::string_view to);

/// Collapses every run of whitespace into a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

bool contains(std::string_view haystack, std::string_view needle);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

/// Writes via a temp file in the same directory plus rename, so concurrent
/// writers of identical content cannot leave a torn file behind.
void atomic_write_file(const std::string& path, std::string_view content);

}  // namespace physforge
