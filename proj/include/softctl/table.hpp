#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace softctl {

/// Dense row-major 2-D array. Rows are exposed as spans.
template <class T>
class Table2 {
 public:
  Table2() = default;
  Table2(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Table2&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Dense row-major 3-D array; row(i, j) is the contiguous innermost slice.
template <class T>
class Table3 {
 public:
  Table3() = default;
  Table3(std::size_t d0, std::size_t d1, std::size_t d2, T fill = T{})
      : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {}

  std::size_t dim0() const { return d0_; }
  std::size_t dim1() const { return d1_; }
  std::size_t dim2() const { return d2_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * d1_ + j) * d2_ + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * d1_ + j) * d2_ + k];
  }

  std::span<T> row(std::size_t i, std::size_t j) { return {data_.data() + (i * d1_ + j) * d2_, d2_}; }
  std::span<const T> row(std::size_t i, std::size_t j) const {
    return {data_.data() + (i * d1_ + j) * d2_, d2_};
  }

  /// The (d1 x d2) slab at leading index i, e.g. one timestep of a T x S x A table.
  Table2<T> slice(std::size_t i) const {
    Table2<T> out(d1_, d2_);
    for (std::size_t j = 0; j < d1_; ++j)
      for (std::size_t k = 0; k < d2_; ++k) out(j, k) = (*this)(i, j, k);
    return out;
  }
  void set_slice(std::size_t i, const Table2<T>& slab) {
    if (slab.rows() != d1_ || slab.cols() != d2_) throw std::invalid_argument("Table3::set_slice: shape mismatch");
    for (std::size_t j = 0; j < d1_; ++j)
      for (std::size_t k = 0; k < d2_; ++k) (*this)(i, j, k) = slab(j, k);
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Table3&) const = default;

 private:
  std::size_t d0_ = 0;
  std::size_t d1_ = 0;
  std::size_t d2_ = 0;
  std::vector<T> data_;
};

}  // namespace softctl
