#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace fbgan {

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file. Throws StorageError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Whole-file read; throws StorageError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// create_directories with StorageError on failure.
void ensure_directory(const std::filesystem::path& dir);

}  // namespace fbgan
