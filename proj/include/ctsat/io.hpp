#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ctsat::io {

/// Shortest decimal text that parses back to the same double ("%.17g").
std::string format_double(double v);

/// Strict double parse; throws InputError naming `what` on failure.
double parse_double(std::string_view text, std::string_view what);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Pretty JSON with a trailing newline.
std::string dump_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Splits one CSV line on commas, trimming spaces and a trailing '\r'.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace ctsat::io
