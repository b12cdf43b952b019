#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nirstext {

// Dense row-major double matrix. The whole numeric stack works in double and
// converts to float32 only at file boundaries.
struct Mat {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative shape");
  }

  static Mat zeros(std::int64_t r, std::int64_t c) { return Mat(r, c); }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  double* row(std::int64_t r) { return v.data() + r * cols; }
  const double* row(std::int64_t r) const { return v.data() + r * cols; }

  double& at(std::int64_t r, std::int64_t c) { return v[static_cast<std::size_t>(r * cols + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return v[static_cast<std::size_t>(r * cols + c)]; }

  std::size_t size() const { return v.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  Mat transposed() const {
    Mat t(cols, rows);
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t c = 0; c < cols; ++c) t.at(c, r) = at(r, c);
    return t;
  }
};

}  // namespace nirstext
