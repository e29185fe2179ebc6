#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "dyntex/tensor.hpp"

namespace dyntex {

// Activations are [H, W, C] tensors; conv kernels are [out, in, kh, kw].

/// Output extent of a sliding window, (in + 2*pad - k) / stride + 1.
/// Throws invalid_shape when the division is not exact or the window does
/// not fit.
std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                 std::size_t pad, const char* what);

/// Kernel re-laid as [kh, kw, in, out] so the innermost loops of both conv
/// passes run over contiguous channels.
template <typename T>
Tensor<T> pack_kernel(const Tensor<T>& kernel);

/// Cross-correlation with zero padding plus bias. Each output element is
/// bias + sum over (ky, kx, c_in) in that order.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         std::size_t stride, std::size_t padding);

/// Adjoint of conv2d_forward with respect to its input. The input extent is
/// recovered as (H' - 1) * stride + kh - 2 * padding.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                                std::size_t stride, std::size_t padding);

template <typename T>
Tensor<T> conv2d_forward_packed(const Tensor<T>& input, const Tensor<T>& packed,
                                const Tensor<T>& bias, std::size_t stride, std::size_t padding);
template <typename T>
Tensor<T> conv2d_backward_input_packed(const Tensor<T>& grad_out, const Tensor<T>& packed,
                                       std::size_t stride, std::size_t padding);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

/// Passes grad_out where the forward input was strictly positive; the
/// subgradient at exactly zero is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& x);

enum class PoolMode { max, avg };

struct PoolCache {
  PoolMode mode = PoolMode::max;
  Shape input_shape;
  std::size_t window = 1;
  std::size_t stride = 1;
  /// Max mode only: flat input index selected for each output element.
  std::vector<std::uint32_t> argmax;
};

/// Max mode keeps the first maximum in row-major window order.
template <typename T>
std::pair<Tensor<T>, PoolCache> pool_forward(const Tensor<T>& x, PoolMode mode, std::size_t window,
                                             std::size_t stride);

template <typename T>
Tensor<T> pool_backward(const Tensor<T>& grad_out, const PoolCache& cache);

}  // namespace dyntex
