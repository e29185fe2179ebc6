#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dyntex/error.hpp"

namespace dyntex {

enum class DType { f32, f64 };

/// Extents of a dense row-major array, rank 1 to 4, every extent >= 1.
/// A default-constructed Shape is the rank-0 "empty" shape used for
/// unset tensors; it has zero elements.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t numel() const noexcept;
  bool empty() const noexcept { return dims_.empty(); }

  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

struct ZeroFill {};
struct ConstantFill {
  double value = 0.0;
};
/// White-noise fill. Element i draws from the counter-based generator
/// described in random.hpp, so a (seed, shape) pair always yields the same
/// bits regardless of thread count or platform.
struct GaussianFill {
  double mean = 0.0;
  double std = 1.0;
  std::uint64_t seed = 0;
};
using Fill = std::variant<ZeroFill, ConstantFill, GaussianFill>;

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor filled(Shape shape, const Fill& fill);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  /// Same values under a new shape with identical element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// C = A * B for rank-2 A [m,k] and B [k,n]. Every output element is summed
/// in ascending k order with a double accumulator.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// C = A^T * B for rank-2 A [k,m] and B [k,n]; same reduction order as matmul.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// a*X + b*Y elementwise.
template <typename T>
Tensor<T> axpby(double a, const Tensor<T>& x, double b, const Tensor<T>& y);

/// Sum of squares in storage order.
template <typename T>
double frobenius_sq(const Tensor<T>& x);

template <typename T>
double dot(const Tensor<T>& x, const Tensor<T>& y);

template <typename T>
double max_abs(const Tensor<T>& x);

template <typename T>
bool all_finite(const Tensor<T>& x);

/// Columns [first, first + width) of a rank-2 tensor.
template <typename T>
Tensor<T> column_block(const Tensor<T>& x, std::size_t first, std::size_t width);

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace dyntex
