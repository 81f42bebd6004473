#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dcfae/errors.hpp"

namespace dcfae {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Dense row-major tensor. Images are stored NHWC.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{}) : shape(std::move(s)), data(element_count(shape), fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty(); }

  /// Leading axis; everything else is folded into cols().
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return rows() == 0 ? 0 : data.size() / rows(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  std::span<T> values() { return data; }
  std::span<const T> values() const { return data; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  Tensor reshaped(Shape s) const {
    if (element_count(s) != data.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape) + " to " + shape_string(s));
    }
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Views a tensor as a [rows, cols] matrix.
template <typename T>
MatrixMap<T> as_matrix(Tensor<T>& t) {
  return MatrixMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
ConstMatrixMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatrixMap<T>(t.ptr(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

/// Stacks two tensors with matching trailing shape along axis 0.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape.begin() + 1, a.shape.end(), b.shape.begin() + 1)) {
    throw ShapeError("concat_rows: " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  }
  Shape s = a.shape;
  s[0] += b.shape[0];
  Tensor<T> out(s);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

/// Rows [begin, end) along axis 0.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& t, std::size_t begin, std::size_t end) {
  Shape s = t.shape;
  s[0] = end - begin;
  Tensor<T> out(s);
  const std::size_t stride = t.cols();
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(begin * stride),
            t.data.begin() + static_cast<std::ptrdiff_t>(end * stride), out.data.begin());
  return out;
}

/// Gathers rows by index along axis 0.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& t, std::span<const std::size_t> index) {
  Shape s = t.shape;
  s[0] = index.size();
  Tensor<T> out(s);
  const std::size_t stride = t.cols();
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(index[i] * stride), stride,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

}  // namespace dcfae
