#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "error.hpp"

namespace voiceguard {

/// Dense row-major matrix; rows are frames throughout the library.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const noexcept { return data.size(); }
  bool same_shape(const Matrix& o) const noexcept { return rows == o.rows && cols == o.cols; }
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch,
          std::string(what) + ": shapes " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
              " and " + std::to_string(b.rows) + "x" + std::to_string(b.cols) + " differ");
}

}  // namespace voiceguard
