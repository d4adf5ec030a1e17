#pragma once

#include <string>
#include <string_view>

namespace anogan::io {

// Whole-file read; throws std::runtime_error when the file cannot be opened.
std::string read_file(const std::string& path);

// Writes to "<path>.partial" and renames over `path`, so readers never see a
// half-written file. The temporary is removed if anything fails.
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace anogan::io
