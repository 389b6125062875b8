#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tbm {

// Dense row-major matrix, just enough for score tables and normal equations.
struct matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> a;

  matrix() = default;
  matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(size_t i, size_t j) { return a[i * cols + j]; }
  double operator()(size_t i, size_t j) const { return a[i * cols + j]; }

  std::vector<double> row(size_t i) const {
    return std::vector<double>(a.begin() + i * cols, a.begin() + (i + 1) * cols);
  }
};

// Score table: rows follow dataset order, columns follow bottleneck order.
struct score_matrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_names;
  matrix values;
};

}  // namespace tbm
