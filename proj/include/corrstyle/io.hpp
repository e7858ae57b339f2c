#pragma once

#include <filesystem>
#include <string>

namespace corrstyle {

// Writes `path.tmp` and renames it over `path`; creates parent directories.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace corrstyle
