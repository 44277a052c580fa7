#pragma once

#include <cstddef>
#include <vector>

#include "shield/matrix.hpp"

namespace shield {

// Compressed sparse row matrix of doubles. Column indices within a row are
// ascending, so products accumulate in a fixed order.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return values.size(); }
  double at(std::size_t r, std::size_t c) const noexcept;
  Matrix to_dense() const;
};

// this * dense
Matrix spmm(const CsrMatrix& a, const Matrix& b);
// this^T * dense
Matrix spmm_transposed(const CsrMatrix& a, const Matrix& b);

}  // namespace shield
