#include "dyntex/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "dyntex/random.hpp"

namespace dyntex {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > Shape::kMaxRank) {
    throw Error(ErrorCode::invalid_shape,
                "shape rank must be 1.." + std::to_string(Shape::kMaxRank) + ", got " +
                    std::to_string(dims.size()));
  }
  std::size_t count = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw Error(ErrorCode::invalid_shape, "shape has a zero extent");
    if (count > std::numeric_limits<std::size_t>::max() / d) {
      throw Error(ErrorCode::invalid_shape, "shape element count overflows");
    }
    count *= d;
  }
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* what) {
  if (t.shape().rank() != 2) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(what) + " expects a rank-2 tensor, got " + t.shape().to_string());
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate_dims(dims_); }

std::size_t Shape::numel() const noexcept {
  if (dims_.empty()) return 0;
  std::size_t count = 1;
  for (std::size_t d : dims_) count *= d;
  return count;
}

std::string Shape::to_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(what) + ": shape " + a.to_string() + " vs " + b.to_string());
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.numel(), T{0}) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw Error(ErrorCode::shape_mismatch, "tensor data length " + std::to_string(data_.size()) +
                                               " does not match shape " + shape_.to_string());
  }
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, const Fill& fill) {
  if (shape.empty()) throw Error(ErrorCode::invalid_shape, "cannot fill an empty shape");
  Tensor out(std::move(shape));
  if (const auto* c = std::get_if<ConstantFill>(&fill)) {
    for (T& v : out.data_) v = static_cast<T>(c->value);
  } else if (const auto* g = std::get_if<GaussianFill>(&fill)) {
    if (!(g->std >= 0.0)) throw Error(ErrorCode::invalid_argument, "gaussian std must be >= 0");
    for (std::size_t i = 0; i < out.data_.size(); ++i) {
      out.data_[i] = static_cast<T>(g->mean + g->std * counter_normal(g->seed, i));
    }
  }
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  if (shape.numel() != data_.size()) {
    throw Error(ErrorCode::shape_mismatch,
                "cannot reshape " + shape_.to_string() + " to " + shape.to_string());
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorCode::shape_mismatch,
                "matmul inner dims differ: " + a.shape().to_string() + " x " + b.shape().to_string());
  }
  Tensor<T> c(Shape{m, n});
  std::vector<double> row(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < n; ++j) c.at(i, j) = static_cast<T>(row[j]);
  }
  return c;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw Error(ErrorCode::shape_mismatch, "matmul_tn inner dims differ: " + a.shape().to_string() +
                                               "^T x " + b.shape().to_string());
  }
  std::vector<double> acc(m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a.data() + p * m;
    const T* brow = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* out = acc.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * static_cast<double>(brow[j]);
    }
  }
  Tensor<T> c(Shape{m, n});
  for (std::size_t i = 0; i < acc.size(); ++i) c[i] = static_cast<T>(acc[i]);
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

template <typename T>
Tensor<T> axpby(double a, const Tensor<T>& x, double b, const Tensor<T>& y) {
  require_same_shape(x.shape(), y.shape(), "axpby");
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(a * static_cast<double>(x[i]) + b * static_cast<double>(y[i]));
  }
  return out;
}

template <typename T>
double frobenius_sq(const Tensor<T>& x) {
  double sum = 0.0;
  for (T v : x.values()) sum += static_cast<double>(v) * static_cast<double>(v);
  return sum;
}

template <typename T>
double dot(const Tensor<T>& x, const Tensor<T>& y) {
  require_same_shape(x.shape(), y.shape(), "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return sum;
}

template <typename T>
double max_abs(const Tensor<T>& x) {
  double m = 0.0;
  for (T v : x.values()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.values())
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
Tensor<T> column_block(const Tensor<T>& x, std::size_t first, std::size_t width) {
  require_rank2(x, "column_block");
  if (width == 0 || first + width > x.dim(1)) {
    throw Error(ErrorCode::shape_mismatch, "column block out of range for " + x.shape().to_string());
  }
  const std::size_t rows = x.dim(0);
  Tensor<T> out(Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = x.at(r, first + c);
  return out;
}

#define DYNTEX_INSTANTIATE(T)                                                      \
  template class Tensor<T>;                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> transpose(const Tensor<T>&);                                  \
  template Tensor<T> axpby(double, const Tensor<T>&, double, const Tensor<T>&);    \
  template double frobenius_sq(const Tensor<T>&);                                  \
  template double dot(const Tensor<T>&, const Tensor<T>&);                         \
  template double max_abs(const Tensor<T>&);                                       \
  template bool all_finite(const Tensor<T>&);                                      \
  template Tensor<T> column_block(const Tensor<T>&, std::size_t, std::size_t);

DYNTEX_INSTANTIATE(float)
DYNTEX_INSTANTIATE(double)

#undef DYNTEX_INSTANTIATE

}  // namespace dyntex
