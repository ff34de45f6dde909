#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace memrec {

// Throws Error(StoreIo) when the file cannot be read.
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace memrec
