#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace covidnn {

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatrixMap = Eigen::Map<MatrixRM<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const MatrixRM<Scalar>>;

inline std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

inline std::string shape_to_string(const std::vector<int>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense row-major tensor over a flat buffer. The last index varies fastest,
// so a (H,W,C) image stores channel-interleaved rows.
template <typename Scalar>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), Scalar(0));
  }

  Tensor(std::vector<int> shape, std::vector<Scalar> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape();
    if (static_cast<std::int64_t>(data_.size()) != shape_size(shape_))
      throw std::invalid_argument("Tensor: value count " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_to_string(shape_));
  }

  static Tensor full(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& values() { return data_; }
  const std::vector<Scalar>& values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  Scalar& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const Scalar& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  Scalar& at(int i0) { return data_[check_index(flat1(i0))]; }
  const Scalar& at(int i0) const { return data_[check_index(flat1(i0))]; }
  Scalar& at(int i0, int i1) { return data_[check_index(flat2(i0, i1))]; }
  const Scalar& at(int i0, int i1) const { return data_[check_index(flat2(i0, i1))]; }
  Scalar& at(int i0, int i1, int i2) { return data_[check_index(flat3(i0, i1, i2))]; }
  const Scalar& at(int i0, int i1, int i2) const { return data_[check_index(flat3(i0, i1, i2))]; }
  Scalar& at(int i0, int i1, int i2, int i3) { return data_[check_index(flat4(i0, i1, i2, i3))]; }
  const Scalar& at(int i0, int i1, int i2, int i3) const {
    return data_[check_index(flat4(i0, i1, i2, i3))];
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(std::vector<int> new_shape) const {
    if (shape_size(new_shape) != size())
      throw std::invalid_argument("Tensor::reshaped: size mismatch, " + shape_to_string(shape_) +
                                  " -> " + shape_to_string(new_shape));
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
    return Tensor<Other>(shape_, std::move(out));
  }

  bool all_finite() const {
    for (Scalar v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // 2D Eigen view; the tensor must hold exactly rows*cols elements.
  MatrixMap<Scalar> as_matrix(Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != size())
      throw std::invalid_argument("Tensor::as_matrix: view size mismatch");
    return MatrixMap<Scalar>(data_.data(), rows, cols);
  }

  ConstMatrixMap<Scalar> as_matrix(Eigen::Index rows, Eigen::Index cols) const {
    if (rows * cols != size())
      throw std::invalid_argument("Tensor::as_matrix: view size mismatch");
    return ConstMatrixMap<Scalar>(data_.data(), rows, cols);
  }

  // Rank-2 tensors only.
  MatrixMap<Scalar> as_matrix() {
    require_rank(2);
    return as_matrix(extent(0), extent(1));
  }

  ConstMatrixMap<Scalar> as_matrix() const {
    require_rank(2);
    return as_matrix(extent(0), extent(1));
  }

  void require_rank(int r) const {
    if (rank() != r)
      throw std::invalid_argument("Tensor: expected rank " + std::to_string(r) + ", got shape " +
                                  shape_to_string(shape_));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  void check_shape() const {
    if (shape_.empty()) throw std::invalid_argument("Tensor: rank must be >= 1");
    for (int e : shape_)
      if (e <= 0)
        throw std::invalid_argument("Tensor: non-positive extent in shape " +
                                    shape_to_string(shape_));
  }

  std::size_t check_index(std::int64_t i) const {
    if (i < 0 || i >= size())
      throw std::out_of_range("Tensor: index " + std::to_string(i) + " out of range for shape " +
                              shape_to_string(shape_));
    return static_cast<std::size_t>(i);
  }

  std::int64_t flat1(int i0) const {
    require_rank(1);
    return i0;
  }
  std::int64_t flat2(int i0, int i1) const {
    require_rank(2);
    return static_cast<std::int64_t>(i0) * shape_[1] + i1;
  }
  std::int64_t flat3(int i0, int i1, int i2) const {
    require_rank(3);
    return (static_cast<std::int64_t>(i0) * shape_[1] + i1) * shape_[2] + i2;
  }
  std::int64_t flat4(int i0, int i1, int i2, int i3) const {
    require_rank(4);
    return ((static_cast<std::int64_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3;
  }

  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

}  // namespace covidnn
