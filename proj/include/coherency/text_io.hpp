#pragma once

#include <filesystem>
#include <string>

namespace coherency {

// Shortest text that parses back to the same double; locale independent.
std::string format_double(double v);
// Fixed 17 significant digits, for column-aligned numeric files.
std::string format_double17(double v);

std::string read_text_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place, so a failed
// write never leaves a partial file at `path`.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace coherency
