#include "shield/sparse.hpp"

#include <algorithm>
#include <vector>

#include "shield/errors.hpp"

namespace shield {

double CsrMatrix::at(std::size_t r, std::size_t c) const noexcept {
  const auto first = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  const auto last = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return values[static_cast<std::size_t>(it - col_idx.begin())];
}

Matrix CsrMatrix::to_dense() const {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t p = row_ptr[r]; p < row_ptr[r + 1]; ++p) m(r, col_idx[p]) = values[p];
  return m;
}

Matrix spmm(const CsrMatrix& a, const Matrix& b) {
  if (a.cols != b.rows()) {
    throw ShapeError("spmm: inner dimensions differ (" + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " * " + shape_string(b) + ")");
  }
  Matrix out(a.rows, b.cols());
  std::vector<double> terms;
  for (std::size_t r = 0; r < a.rows; ++r) {
    const std::size_t begin = a.row_ptr[r], end = a.row_ptr[r + 1];
    terms.resize(end - begin);
    for (std::size_t j = 0; j < b.cols(); ++j) {
      for (std::size_t p = begin; p < end; ++p) terms[p - begin] = a.values[p] * b(a.col_idx[p], j);
      out(r, j) = order_invariant_sum(terms);
    }
  }
  return out;
}

Matrix spmm_transposed(const CsrMatrix& a, const Matrix& b) {
  if (a.rows != b.rows()) {
    throw ShapeError("spmm_transposed: row counts differ (" + std::to_string(a.rows) + " vs " +
                     shape_string(b) + ")");
  }
  Matrix out(a.cols, b.cols());
  for (std::size_t r = 0; r < a.rows; ++r) {
    const auto src = b.row(r);
    for (std::size_t p = a.row_ptr[r]; p < a.row_ptr[r + 1]; ++p) {
      const double w = a.values[p];
      auto dst = out.row(a.col_idx[p]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

}  // namespace shield
