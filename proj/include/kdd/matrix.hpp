#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace kdd {

// Dense row-major matrix of doubles; one row per entity (user, item, env).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  std::span<double> row(int r) {
    assert(r >= 0 && r < rows);
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    assert(r >= 0 && r < rows);
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace kdd
