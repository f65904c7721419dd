#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "eot/common.hpp"

namespace eot {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major n-dimensional array. This is the lingua franca of the
// library: layers exchange Tensors and map them onto Eigen matrices for the
// heavy products. The scalar type is a template parameter so the training
// path can run float while gradient checks run double.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), T(0));
  }

  Tensor(Shape shape, T value) : shape_(std::move(shape)) {
    data_.assign(count(shape_), value);
  }

  static std::size_t count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t(1), std::multiplies<>());
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t dim(std::size_t i) const {
    require<ShapeError>(i < shape_.size(), "dim ", i, " out of rank ", shape_.size());
    return shape_[i];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename... Ix>
  T& at(Ix... ix) {
    return data_[offset(ix...)];
  }
  template <typename... Ix>
  const T& at(Ix... ix) const {
    return data_[offset(ix...)];
  }

  template <typename... Ix>
  std::size_t offset(Ix... ix) const {
    constexpr std::size_t n = sizeof...(Ix);
    require<ShapeError>(n == shape_.size(), "index rank ", n, " vs tensor rank ", shape_.size());
    const std::size_t idx[n] = {static_cast<std::size_t>(ix)...};
    std::size_t off = 0;
    for (std::size_t d = 0; d < n; ++d) off = off * shape_[d] + idx[d];
    return off;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  // Reinterprets the buffer under a new shape with the same element count.
  Tensor reshaped(Shape s) const {
    require<ShapeError>(count(s) == data_.size(), "reshape ", shape_str(shape_), " -> ",
                        shape_str(s), " changes element count");
    Tensor out;
    out.shape_ = std::move(s);
    out.data_ = data_;
    return out;
  }

  void reshape_inplace(Shape s) {
    require<ShapeError>(count(s) == data_.size(), "reshape ", shape_str(shape_), " -> ",
                        shape_str(s), " changes element count");
    shape_ = std::move(s);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T sum() const {
    T acc(0);
    for (const T& v : data_) acc += v;
    return acc;
  }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Views a contiguous buffer as a (rows x cols) row-major matrix.
template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  require<ShapeError>(rows * cols == t.size(), "matrix view ", rows, "x", cols,
                      " vs ", t.size(), " elements");
  return MatMap<T>(t.data(), rows, cols);
}

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  require<ShapeError>(rows * cols == t.size(), "matrix view ", rows, "x", cols,
                      " vs ", t.size(), " elements");
  return ConstMatMap<T>(t.data(), rows, cols);
}

// y += alpha * x
template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
  require<ShapeError>(x.size() == y.size(), "axpy size mismatch");
  const T* xs = x.data();
  T* ys = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] += alpha * xs[i];
}

template <typename T, typename What>
void check_shape(const Tensor<T>& t, const Shape& expect, const What& what) {
  require<ShapeError>(t.shape() == expect, what, ": expected ", shape_str(expect),
                      ", got ", shape_str(t.shape()));
}

}  // namespace eot
