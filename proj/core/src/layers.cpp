#include "dyntex/layers.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "dyntex/parallel.hpp"

namespace dyntex {

namespace {

void require_hwc(const Shape& s, const char* what) {
  if (s.rank() != 3) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(what) + " expects an [H,W,C] tensor, got " + s.to_string());
  }
}

void require_kernel(const Shape& s, const char* what) {
  if (s.rank() != 4) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(what) + " expects a [out,in,kh,kw] kernel, got " + s.to_string());
  }
}

}  // namespace

std::size_t window_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                 std::size_t pad, const char* what) {
  if (stride == 0 || kernel == 0) {
    throw Error(ErrorCode::invalid_shape, std::string(what) + ": kernel and stride must be >= 1");
  }
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel || (padded - kernel) % stride != 0) {
    throw Error(ErrorCode::invalid_shape,
                std::string(what) + ": non-integral output size for extent " + std::to_string(in) +
                    ", window " + std::to_string(kernel) + ", stride " + std::to_string(stride) +
                    ", padding " + std::to_string(pad));
  }
  return (padded - kernel) / stride + 1;
}

template <typename T>
Tensor<T> pack_kernel(const Tensor<T>& kernel) {
  require_kernel(kernel.shape(), "pack_kernel");
  const std::size_t out = kernel.dim(0), in = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  Tensor<T> packed(Shape{kh, kw, in, out});
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x)
          packed[((y * kw + x) * in + i) * out + o] = kernel[((o * in + i) * kh + y) * kw + x];
  return packed;
}

template <typename T>
Tensor<T> conv2d_forward_packed(const Tensor<T>& input, const Tensor<T>& packed,
                                const Tensor<T>& bias, std::size_t stride, std::size_t padding) {
  require_hwc(input.shape(), "conv2d_forward");
  const std::size_t kh = packed.dim(0), kw = packed.dim(1), cin = packed.dim(2), cout = packed.dim(3);
  const std::size_t h = input.dim(0), w = input.dim(1);
  if (input.dim(2) != cin) {
    throw Error(ErrorCode::shape_mismatch, "conv2d_forward: input has " + std::to_string(input.dim(2)) +
                                               " channels, kernel expects " + std::to_string(cin));
  }
  if (bias.size() != cout) {
    throw Error(ErrorCode::shape_mismatch, "conv2d_forward: bias length " + std::to_string(bias.size()) +
                                               " != out channels " + std::to_string(cout));
  }
  const std::size_t oh = window_output_extent(h, kh, stride, padding, "conv2d_forward (height)");
  const std::size_t ow = window_output_extent(w, kw, stride, padding, "conv2d_forward (width)");
  Tensor<T> out(Shape{oh, ow, cout});
  const T* in_data = input.data();
  const T* k_data = packed.data();
  T* out_data = out.data();
  const T* b_data = bias.data();

  parallel_for(oh, oh * ow * kh * kw * cin * cout, [&](std::size_t row_begin, std::size_t row_end) {
    std::vector<T> acc(cout);
    for (std::size_t oy = row_begin; oy < row_end; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::copy(b_data, b_data + cout, acc.begin());
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const T* px = in_data + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
            const T* kslice = k_data + (ky * kw + kx) * cin * cout;
            for (std::size_t c = 0; c < cin; ++c) {
              const T v = px[c];
              const T* krow = kslice + c * cout;
              for (std::size_t o = 0; o < cout; ++o) acc[o] += v * krow[o];
            }
          }
        }
        std::copy(acc.begin(), acc.end(), out_data + (oy * ow + ox) * cout);
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv2d_backward_input_packed(const Tensor<T>& grad_out, const Tensor<T>& packed,
                                       std::size_t stride, std::size_t padding) {
  require_hwc(grad_out.shape(), "conv2d_backward_input");
  const std::size_t kh = packed.dim(0), kw = packed.dim(1), cin = packed.dim(2), cout = packed.dim(3);
  const std::size_t oh = grad_out.dim(0), ow = grad_out.dim(1);
  if (grad_out.dim(2) != cout) {
    throw Error(ErrorCode::shape_mismatch, "conv2d_backward_input: gradient has " +
                                               std::to_string(grad_out.dim(2)) +
                                               " channels, kernel produces " + std::to_string(cout));
  }
  if (stride == 0) throw Error(ErrorCode::invalid_shape, "conv2d_backward_input: stride must be >= 1");
  const std::size_t h_padded = (oh - 1) * stride + kh;
  const std::size_t w_padded = (ow - 1) * stride + kw;
  if (h_padded <= 2 * padding || w_padded <= 2 * padding) {
    throw Error(ErrorCode::shape_mismatch, "conv2d_backward_input: gradient " +
                                               grad_out.shape().to_string() +
                                               " implies an empty input");
  }
  const std::size_t h = h_padded - 2 * padding, w = w_padded - 2 * padding;
  Tensor<T> grad_in(Shape{h, w, cin});
  const T* g_data = grad_out.data();
  const T* k_data = packed.data();
  T* gi_data = grad_in.data();

  parallel_for(h, h * w * kh * kw * cin * cout, [&](std::size_t row_begin, std::size_t row_end) {
    std::vector<T> acc(cin);
    for (std::size_t iy = row_begin; iy < row_end; ++iy) {
      for (std::size_t ix = 0; ix < w; ++ix) {
        std::fill(acc.begin(), acc.end(), T{0});
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t ty = static_cast<std::ptrdiff_t>(iy + padding) - static_cast<std::ptrdiff_t>(ky);
          if (ty < 0 || ty % static_cast<std::ptrdiff_t>(stride) != 0) continue;
          const std::size_t oy = static_cast<std::size_t>(ty) / stride;
          if (oy >= oh) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t tx = static_cast<std::ptrdiff_t>(ix + padding) - static_cast<std::ptrdiff_t>(kx);
            if (tx < 0 || tx % static_cast<std::ptrdiff_t>(stride) != 0) continue;
            const std::size_t ox = static_cast<std::size_t>(tx) / stride;
            if (ox >= ow) continue;
            const T* g = g_data + (oy * ow + ox) * cout;
            const T* kslice = k_data + (ky * kw + kx) * cin * cout;
            for (std::size_t c = 0; c < cin; ++c) {
              const T* krow = kslice + c * cout;
              T sum{0};
              for (std::size_t o = 0; o < cout; ++o) sum += krow[o] * g[o];
              acc[c] += sum;
            }
          }
        }
        std::copy(acc.begin(), acc.end(), gi_data + (iy * w + ix) * cin);
      }
    }
  });
  return grad_in;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         std::size_t stride, std::size_t padding) {
  require_kernel(kernel.shape(), "conv2d_forward");
  return conv2d_forward_packed(input, pack_kernel(kernel), bias, stride, padding);
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel,
                                std::size_t stride, std::size_t padding) {
  require_kernel(kernel.shape(), "conv2d_backward_input");
  return conv2d_backward_input_packed(grad_out, pack_kernel(kernel), stride, padding);
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& x) {
  require_same_shape(grad_out.shape(), x.shape(), "relu_backward");
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <typename T>
std::pair<Tensor<T>, PoolCache> pool_forward(const Tensor<T>& x, PoolMode mode, std::size_t window,
                                             std::size_t stride) {
  require_hwc(x.shape(), "pool_forward");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh = window_output_extent(h, window, stride, 0, "pool_forward (height)");
  const std::size_t ow = window_output_extent(w, window, stride, 0, "pool_forward (width)");
  if (mode == PoolMode::max && x.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::invalid_shape, "pool_forward: input too large for argmax indices");
  }
  PoolCache cache{mode, x.shape(), window, stride, {}};
  Tensor<T> y(Shape{oh, ow, c});
  if (mode == PoolMode::max) cache.argmax.resize(y.size());
  const double inv_area = 1.0 / static_cast<double>(window * window);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t out_idx = (oy * ow + ox) * c + ch;
        if (mode == PoolMode::max) {
          std::size_t best = (oy * stride * w + ox * stride) * c + ch;
          for (std::size_t ky = 0; ky < window; ++ky) {
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t idx = ((oy * stride + ky) * w + ox * stride + kx) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          }
          y[out_idx] = x[best];
          cache.argmax[out_idx] = static_cast<std::uint32_t>(best);
        } else {
          double sum = 0.0;
          for (std::size_t ky = 0; ky < window; ++ky)
            for (std::size_t kx = 0; kx < window; ++kx)
              sum += static_cast<double>(x[((oy * stride + ky) * w + ox * stride + kx) * c + ch]);
          y[out_idx] = static_cast<T>(sum * inv_area);
        }
      }
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> pool_backward(const Tensor<T>& grad_out, const PoolCache& cache) {
  require_hwc(grad_out.shape(), "pool_backward");
  const std::size_t w = cache.input_shape[1], c = cache.input_shape[2];
  const std::size_t oh = window_output_extent(cache.input_shape[0], cache.window, cache.stride, 0, "pool_backward");
  const std::size_t ow = window_output_extent(w, cache.window, cache.stride, 0, "pool_backward");
  require_same_shape(grad_out.shape(), Shape{oh, ow, c}, "pool_backward");
  Tensor<T> g(cache.input_shape);
  if (cache.mode == PoolMode::max) {
    for (std::size_t i = 0; i < grad_out.size(); ++i) g[cache.argmax[i]] += grad_out[i];
    return g;
  }
  const double inv_area = 1.0 / static_cast<double>(cache.window * cache.window);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T share = static_cast<T>(static_cast<double>(grad_out[(oy * ow + ox) * c + ch]) * inv_area);
        for (std::size_t ky = 0; ky < cache.window; ++ky)
          for (std::size_t kx = 0; kx < cache.window; ++kx)
            g[((oy * cache.stride + ky) * w + ox * cache.stride + kx) * c + ch] += share;
      }
  return g;
}

#define DYNTEX_INSTANTIATE(T)                                                                       \
  template Tensor<T> pack_kernel(const Tensor<T>&);                                                 \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                    std::size_t, std::size_t);                                      \
  template Tensor<T> conv2d_backward_input(const Tensor<T>&, const Tensor<T>&, std::size_t,         \
                                           std::size_t);                                            \
  template Tensor<T> conv2d_forward_packed(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                           std::size_t, std::size_t);                               \
  template Tensor<T> conv2d_backward_input_packed(const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                                                  std::size_t);                                     \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                             \
  template std::pair<Tensor<T>, PoolCache> pool_forward(const Tensor<T>&, PoolMode, std::size_t,    \
                                                        std::size_t);                               \
  template Tensor<T> pool_backward(const Tensor<T>&, const PoolCache&);

DYNTEX_INSTANTIATE(float)
DYNTEX_INSTANTIATE(double)

#undef DYNTEX_INSTANTIATE

}  // namespace dyntex
