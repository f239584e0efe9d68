#pragma once

#include <filesystem>
#include <string>

namespace timegate {

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& content);

// Recursive copy that preserves the regular-file tree (symlinks copied as
// their targets; permissions default).
void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to);

// True when the first few KiB contain a NUL byte.
bool looks_binary(const std::filesystem::path& p);

// Fresh unique directory under the system temp dir; caller owns removal.
std::filesystem::path make_temp_dir(const std::string& prefix);

namespace fsutil {
using timegate::copy_tree;
using timegate::looks_binary;
using timegate::make_temp_dir;
using timegate::read_text_file;
using timegate::write_text_file;
} // namespace fsutil

} // namespace timegate
