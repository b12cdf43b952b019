#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nirstext/mat.hpp"

namespace nirstext::io {

// Raw little-endian float32 blobs, row-major. Shape travels in the dataset
// manifest, not in the file.
void write_f32(const std::filesystem::path& path, const Mat& m);
Mat read_f32(const std::filesystem::path& path, std::int64_t rows,
             std::int64_t cols);

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// Shortest round-trip decimal rendering (std::to_chars); deterministic.
std::string fmt_double(double x);

// Minimal delimited-text helpers. Fields with the delimiter are not expected
// anywhere in this project's data; writing one throws.
std::string join_row(const std::vector<std::string>& fields, char delim);
std::vector<std::string> split_row(const std::string& line, char delim);

// Splits into lines, dropping a trailing empty line and tolerating CRLF.
std::vector<std::string> split_lines(const std::string& text);

}  // namespace nirstext::io
