#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace t2iaudit {

// Lower-case hex SHA-256, matching `sha256sum`.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
// Writes atomically enough for our purposes: truncate + write + flush; throws on failure.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace t2iaudit
