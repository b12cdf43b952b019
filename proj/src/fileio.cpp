#include "nirstext/fileio.hpp"

#include <charconv>
#include <cstring>
#include <fstream>

#include "nirstext/errors.hpp"

namespace nirstext::io {

void write_f32(const std::filesystem::path& path, const Mat& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  std::vector<float> row(static_cast<std::size_t>(m.cols));
  for (std::int64_t r = 0; r < m.rows; ++r) {
    const double* src = m.row(r);
    for (std::int64_t c = 0; c < m.cols; ++c)
      row[static_cast<std::size_t>(c)] = static_cast<float>(src[c]);
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw DataError("short write: " + path.string());
}

Mat read_f32(const std::filesystem::path& path, std::int64_t rows,
             std::int64_t cols) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open: " + path.string());
  const auto bytes = static_cast<std::uint64_t>(f.tellg());
  const auto expected =
      static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * sizeof(float);
  if (bytes != expected)
    throw DataError(path.string() + ": size " + std::to_string(bytes) +
                    " bytes does not match declared shape " + std::to_string(rows) +
                    "x" + std::to_string(cols));
  f.seekg(0);
  Mat m(rows, cols);
  std::vector<float> buf(static_cast<std::size_t>(cols));
  for (std::int64_t r = 0; r < rows; ++r) {
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    double* dst = m.row(r);
    for (std::int64_t c = 0; c < cols; ++c)
      dst[c] = static_cast<double>(buf[static_cast<std::size_t>(c)]);
  }
  if (!f) throw DataError("short read: " + path.string());
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw DataError("short write: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open: " + path.string());
  const auto n = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::string s(n, '\0');
  f.read(s.data(), static_cast<std::streamsize>(n));
  if (!f) throw DataError("short read: " + path.string());
  return s;
}

std::string fmt_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw NumericError("fmt_double failed");
  return std::string(buf, ptr);
}

std::string join_row(const std::vector<std::string>& fields, char delim) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].find(delim) != std::string::npos ||
        fields[i].find('\n') != std::string::npos)
      throw DataError("field contains delimiter or newline: " + fields[i]);
    if (i) out.push_back(delim);
    out += fields[i];
  }
  return out;
}

std::vector<std::string> split_row(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string::npos) pos = text.size();
    std::size_t end = pos;
    if (end > start && text[end - 1] == '\r') --end;
    lines.push_back(text.substr(start, end - start));
    start = pos + 1;
  }
  return lines;
}

}  // namespace nirstext::io
