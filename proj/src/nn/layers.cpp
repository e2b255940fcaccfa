#include "edgeyolo/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "edgeyolo/simd/kernels.hpp"

namespace edgeyolo::nn {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Linear:
      return "linear";
    case Activation::Leaky:
      return "leaky";
    case Activation::Relu:
      return "relu";
    case Activation::Mish:
      return "mish";
  }
  return "?";
}

std::optional<Activation> parse_activation(std::string_view name) {
  for (auto a : {Activation::Linear, Activation::Leaky, Activation::Relu,
                 Activation::Mish}) {
    if (activation_name(a) == name) {
      return a;
    }
  }
  return std::nullopt;
}

template <class T>
ConvParams<T> ConvParams<T>::zeros(int cin, int kernel, int stride, int filters) {
  ConvParams p;
  p.kernel = kernel;
  p.stride = stride;
  p.filters = filters;
  p.weights = Tensor<T>(Shape{filters, cin, kernel, kernel});
  p.bias.assign(static_cast<std::size_t>(filters), T{});
  return p;
}

template <class T>
BatchNormParams<T> BatchNormParams<T>::identity(int channels) {
  BatchNormParams p;
  const auto c = static_cast<std::size_t>(channels);
  p.gamma.assign(c, T{1});
  p.beta.assign(c, T{});
  p.running_mean.assign(c, T{});
  p.running_var.assign(c, T{1});
  return p;
}

Shape conv_output_shape(const Shape& in, int kernel, int stride, int filters) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ShapeError("conv kernel must be odd and positive, got " +
                     std::to_string(kernel));
  }
  if (stride < 1) {
    throw ShapeError("conv stride must be positive");
  }
  const int pad = kernel / 2;
  const int ho = (in.h + 2 * pad - kernel) / stride + 1;
  const int wo = (in.w + 2 * pad - kernel) / stride + 1;
  if (ho < 1 || wo < 1) {
    throw ShapeError("conv output would be empty for input " + in.str());
  }
  return Shape{in.n, filters, ho, wo};
}

Shape pool_output_shape(const Shape& in, int kernel, int stride) {
  if (kernel < 1 || stride < 1) {
    throw ShapeError("pool kernel and stride must be positive");
  }
  if (stride == 1) {
    return in;
  }
  const int ho = (in.h - kernel) / stride + 1;
  const int wo = (in.w - kernel) / stride + 1;
  if (in.h < kernel || in.w < kernel || ho < 1 || wo < 1) {
    throw ShapeError("pool " + std::to_string(kernel) + "/" +
                     std::to_string(stride) + " does not fit input " + in.str());
  }
  return Shape{in.n, in.c, ho, wo};
}

namespace {

// Unfolds one batch item into a (cin*k*k, ho*wo) matrix with zero padding.
template <class T>
void im2col(const T* src, int cin, int h, int w, int k, int stride, int pad,
            int ho, int wo, T* col) {
  const std::size_t cols = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T{});
            continue;
          }
          const T* srow = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? srow[ix] : T{};
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, int cin, int h, int w, int k, int stride, int pad,
                int ho, int wo, T* dst) {
  const std::size_t cols = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row =
            col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * cols;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            continue;
          }
          T* drow = plane + static_cast<std::size_t>(iy) * w;
          const T* srow = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) {
              drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

template <class T>
bool is_pointwise(const ConvParams<T>& p) {
  return p.kernel == 1 && p.stride == 1;
}

template <class T>
void check_conv(const Tensor<T>& input, const ConvParams<T>& p) {
  const Shape& ws = p.weights.shape();
  if (ws.n != p.filters || ws.h != p.kernel || ws.w != p.kernel) {
    throw ShapeError("conv weights " + ws.str() + " do not match " +
                     std::to_string(p.filters) + " filters of " +
                     std::to_string(p.kernel) + "x" + std::to_string(p.kernel));
  }
  if (input.shape().c != ws.c) {
    throw ShapeError("conv expects " + std::to_string(ws.c) +
                     " input channels but input has " +
                     std::to_string(input.shape().c));
  }
  if (p.bias.size() != static_cast<std::size_t>(p.filters)) {
    throw ShapeError("conv bias length mismatch");
  }
}

template <class T>
void check_bn(const Shape& s, const BatchNormParams<T>& p) {
  const auto c = static_cast<std::size_t>(s.c);
  if (p.gamma.size() != c || p.beta.size() != c || p.running_mean.size() != c ||
      p.running_var.size() != c) {
    throw ShapeError("batch norm parameters sized for " +
                     std::to_string(p.gamma.size()) + " channels, input has " +
                     std::to_string(s.c));
  }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  check_conv(input, p);
  const Shape in = input.shape();
  const Shape out_shape = conv_output_shape(in, p.kernel, p.stride, p.filters);
  Tensor<T> out(out_shape);
  const auto& ks = simd::kernels<T>();
  const int kdim = in.c * p.kernel * p.kernel;
  const int cols = out_shape.h * out_shape.w;
  std::vector<T> col;
  if (!is_pointwise(p)) {
    col.resize(static_cast<std::size_t>(kdim) * cols);
  }
  for (int b = 0; b < in.n; ++b) {
    const T* src = input.plane(b, 0);
    const T* colp = src;
    if (!is_pointwise(p)) {
      im2col(src, in.c, in.h, in.w, p.kernel, p.stride, p.pad(), out_shape.h,
             out_shape.w, col.data());
      colp = col.data();
    }
    T* dst = out.plane(b, 0);
    for (int f = 0; f < p.filters; ++f) {
      std::fill(dst + static_cast<std::size_t>(f) * cols,
                dst + static_cast<std::size_t>(f + 1) * cols, p.bias[f]);
    }
    ks.gemm(p.filters, cols, kdim, p.weights.data(), kdim, 1, colp, cols, dst,
            cols);
  }
  return out;
}

template <class T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                          const Tensor<T>& grad_out, std::vector<T>& grad_weights,
                          std::vector<T>& grad_bias) {
  check_conv(input, p);
  const Shape in = input.shape();
  const Shape out_shape = conv_output_shape(in, p.kernel, p.stride, p.filters);
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv gradient shape " + grad_out.shape().str() +
                     " != output shape " + out_shape.str());
  }
  grad_weights.resize(p.weights.size(), T{});
  grad_bias.resize(p.bias.size(), T{});
  const auto& ks = simd::kernels<T>();
  const int kdim = in.c * p.kernel * p.kernel;
  const int cols = out_shape.h * out_shape.w;
  Tensor<T> grad_in(in);
  std::vector<T> col(static_cast<std::size_t>(kdim) * cols);
  std::vector<T> dcol(static_cast<std::size_t>(kdim) * cols);
  for (int b = 0; b < in.n; ++b) {
    const T* src = input.plane(b, 0);
    const T* go = grad_out.plane(b, 0);
    for (int f = 0; f < p.filters; ++f) {
      T s{};
      const T* row = go + static_cast<std::size_t>(f) * cols;
      for (int i = 0; i < cols; ++i) {
        s += row[i];
      }
      grad_bias[f] += s;
    }
    const T* colp = src;
    if (!is_pointwise(p)) {
      im2col(src, in.c, in.h, in.w, p.kernel, p.stride, p.pad(), out_shape.h,
             out_shape.w, col.data());
      colp = col.data();
    }
    ks.gemm_nt(p.filters, kdim, cols, go, cols, colp, cols, grad_weights.data(),
               kdim);
    if (is_pointwise(p)) {
      ks.gemm(kdim, cols, p.filters, p.weights.data(), 1, kdim, go, cols,
              grad_in.plane(b, 0), cols);
    } else {
      std::fill(dcol.begin(), dcol.end(), T{});
      ks.gemm(kdim, cols, p.filters, p.weights.data(), 1, kdim, go, cols,
              dcol.data(), cols);
      col2im_add(dcol.data(), in.c, in.h, in.w, p.kernel, p.stride, p.pad(),
                 out_shape.h, out_shape.w, grad_in.plane(b, 0));
    }
  }
  return grad_in;
}

template <class T>
Tensor<T> batch_norm(const Tensor<T>& input, const BatchNormParams<T>& p) {
  const Shape s = input.shape();
  check_bn(s, p);
  Tensor<T> out(s);
  const auto& ks = simd::kernels<T>();
  for (int c = 0; c < s.c; ++c) {
    const T scale = p.gamma[c] / std::sqrt(p.running_var[c] + p.eps);
    const T shift = p.beta[c] - p.running_mean[c] * scale;
    for (int b = 0; b < s.n; ++b) {
      ks.affine(s.plane(), scale, shift, input.plane(b, c), out.plane(b, c));
    }
  }
  return out;
}

template <class T>
Tensor<T> batch_norm_backward(const Tensor<T>& input, const BatchNormParams<T>& p,
                              const Tensor<T>& grad_out, std::vector<T>& grad_gamma,
                              std::vector<T>& grad_beta) {
  const Shape s = input.shape();
  check_bn(s, p);
  grad_gamma.resize(p.gamma.size(), T{});
  grad_beta.resize(p.beta.size(), T{});
  Tensor<T> grad_in(s);
  const std::size_t plane = s.plane();
  for (int c = 0; c < s.c; ++c) {
    const T inv_std = T{1} / std::sqrt(p.running_var[c] + p.eps);
    const T scale = p.gamma[c] * inv_std;
    T dg{}, db{};
    for (int b = 0; b < s.n; ++b) {
      const T* x = input.plane(b, c);
      const T* g = grad_out.plane(b, c);
      T* gi = grad_in.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        dg += g[i] * (x[i] - p.running_mean[c]) * inv_std;
        db += g[i];
        gi[i] = g[i] * scale;
      }
    }
    grad_gamma[c] += dg;
    grad_beta[c] += db;
  }
  return grad_in;
}

template <class T>
Tensor<T> batch_norm_train(const Tensor<T>& input, const BatchNormParams<T>& p,
                           BatchStats<T>& stats) {
  const Shape s = input.shape();
  check_bn(s, p);
  const std::size_t plane = s.plane();
  const T count = static_cast<T>(plane * s.n);
  stats.mean.assign(s.c, T{});
  stats.var.assign(s.c, T{});
  Tensor<T> out(s);
  for (int c = 0; c < s.c; ++c) {
    double sum = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* x = input.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum += x[i];
      }
    }
    const T mean = static_cast<T>(sum / count);
    double sq = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* x = input.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = static_cast<double>(x[i]) - mean;
        sq += d * d;
      }
    }
    const T var = static_cast<T>(sq / count);
    stats.mean[c] = mean;
    stats.var[c] = var;
    const T scale = p.gamma[c] / std::sqrt(var + p.eps);
    const T shift = p.beta[c] - mean * scale;
    for (int b = 0; b < s.n; ++b) {
      const T* x = input.plane(b, c);
      T* y = out.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        y[i] = x[i] * scale + shift;
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> batch_norm_train_backward(const Tensor<T>& input,
                                    const BatchNormParams<T>& p,
                                    const BatchStats<T>& stats,
                                    const Tensor<T>& grad_out,
                                    std::vector<T>& grad_gamma,
                                    std::vector<T>& grad_beta) {
  const Shape s = input.shape();
  check_bn(s, p);
  grad_gamma.resize(p.gamma.size(), T{});
  grad_beta.resize(p.beta.size(), T{});
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(plane * s.n);
  Tensor<T> grad_in(s);
  for (int c = 0; c < s.c; ++c) {
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(stats.var[c]) + p.eps);
    const double mean = stats.mean[c];
    double sum_g = 0, sum_gx = 0;
    for (int b = 0; b < s.n; ++b) {
      const T* x = input.plane(b, c);
      const T* g = grad_out.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * (x[i] - mean) * inv_std;
      }
    }
    grad_gamma[c] += static_cast<T>(sum_gx);
    grad_beta[c] += static_cast<T>(sum_g);
    const double k = p.gamma[c] * inv_std;
    const double mg = sum_g / count;
    const double mgx = sum_gx / count;
    for (int b = 0; b < s.n; ++b) {
      const T* x = input.plane(b, c);
      const T* g = grad_out.plane(b, c);
      T* gi = grad_in.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (x[i] - mean) * inv_std;
        gi[i] = static_cast<T>(k * (g[i] - mg - xhat * mgx));
      }
    }
  }
  return grad_in;
}

template <class T>
void update_running_stats(BatchNormParams<T>& p, const BatchStats<T>& stats,
                          T momentum) {
  for (std::size_t c = 0; c < p.channels(); ++c) {
    p.running_mean[c] = momentum * p.running_mean[c] + (T{1} - momentum) * stats.mean[c];
    p.running_var[c] = momentum * p.running_var[c] + (T{1} - momentum) * stats.var[c];
  }
}

namespace {

template <class T>
T softplus(T x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, T{0});
}

}  // namespace

template <class T>
Tensor<T> activate(const Tensor<T>& input, Activation kind, T slope) {
  Tensor<T> out(input.shape());
  const T* x = input.data();
  T* y = out.data();
  const std::size_t n = input.size();
  switch (kind) {
    case Activation::Linear:
      std::copy(x, x + n, y);
      break;
    case Activation::Leaky:
      simd::kernels<T>().leaky(n, slope, x, y);
      break;
    case Activation::Relu:
      simd::kernels<T>().leaky(n, T{0}, x, y);
      break;
    case Activation::Mish:
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = x[i] * std::tanh(softplus(x[i]));
      }
      break;
  }
  return out;
}

template <class T>
Tensor<T> activate_backward(const Tensor<T>& input, const Tensor<T>& grad_out,
                            Activation kind, T slope) {
  if (input.shape() != grad_out.shape()) {
    throw ShapeError("activation gradient shape mismatch");
  }
  Tensor<T> grad_in(input.shape());
  const T* x = input.data();
  const T* g = grad_out.data();
  T* gi = grad_in.data();
  const std::size_t n = input.size();
  switch (kind) {
    case Activation::Linear:
      std::copy(g, g + n, gi);
      break;
    case Activation::Leaky:
      for (std::size_t i = 0; i < n; ++i) {
        gi[i] = x[i] >= T{0} ? g[i] : slope * g[i];
      }
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) {
        gi[i] = x[i] > T{0} ? g[i] : T{0};
      }
      break;
    case Activation::Mish:
      for (std::size_t i = 0; i < n; ++i) {
        const T sp = softplus(x[i]);
        const T th = std::tanh(sp);
        const T sig = T{1} / (T{1} + std::exp(-x[i]));
        gi[i] = g[i] * (th + x[i] * (T{1} - th * th) * sig);
      }
      break;
  }
  return grad_in;
}

namespace {

struct PoolGeometry {
  int pad_lo;
  int ho;
  int wo;
};

PoolGeometry pool_geometry(const Shape& in, int kernel, int stride) {
  const Shape out = pool_output_shape(in, kernel, stride);
  // Stride-1 pools keep the spatial size; the window is centred with the
  // extra cell (even kernels) on the high side.
  const int pad_lo = stride == 1 ? (kernel - 1) / 2 : 0;
  return {pad_lo, out.h, out.w};
}

// Index of the max element in a window (first in scan order on ties), or -1
// if the window lies entirely in the padding.
template <class T>
long window_argmax(const T* plane, int h, int w, int y0, int x0, int kernel) {
  long best = -1;
  T best_v = -std::numeric_limits<T>::infinity();
  for (int ky = 0; ky < kernel; ++ky) {
    const int iy = y0 + ky;
    if (iy < 0 || iy >= h) {
      continue;
    }
    for (int kx = 0; kx < kernel; ++kx) {
      const int ix = x0 + kx;
      if (ix < 0 || ix >= w) {
        continue;
      }
      const long idx = static_cast<long>(iy) * w + ix;
      if (best < 0 || plane[idx] > best_v) {
        best = idx;
        best_v = plane[idx];
      }
    }
  }
  return best;
}

}  // namespace

template <class T>
Tensor<T> max_pool(const Tensor<T>& input, int kernel, int stride) {
  const Shape in = input.shape();
  const PoolGeometry g = pool_geometry(in, kernel, stride);
  Tensor<T> out(Shape{in.n, in.c, g.ho, g.wo});
  for (int b = 0; b < in.n; ++b) {
    for (int c = 0; c < in.c; ++c) {
      const T* src = input.plane(b, c);
      T* dst = out.plane(b, c);
      for (int oy = 0; oy < g.ho; ++oy) {
        for (int ox = 0; ox < g.wo; ++ox) {
          const long idx = window_argmax(src, in.h, in.w, oy * stride - g.pad_lo,
                                         ox * stride - g.pad_lo, kernel);
          dst[oy * g.wo + ox] =
              idx < 0 ? -std::numeric_limits<T>::infinity() : src[idx];
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> max_pool_backward(const Tensor<T>& input, int kernel, int stride,
                            const Tensor<T>& grad_out) {
  const Shape in = input.shape();
  const PoolGeometry g = pool_geometry(in, kernel, stride);
  if (grad_out.shape() != Shape{in.n, in.c, g.ho, g.wo}) {
    throw ShapeError("max pool gradient shape mismatch");
  }
  Tensor<T> grad_in(in);
  for (int b = 0; b < in.n; ++b) {
    for (int c = 0; c < in.c; ++c) {
      const T* src = input.plane(b, c);
      const T* go = grad_out.plane(b, c);
      T* gi = grad_in.plane(b, c);
      for (int oy = 0; oy < g.ho; ++oy) {
        for (int ox = 0; ox < g.wo; ++ox) {
          const long idx = window_argmax(src, in.h, in.w, oy * stride - g.pad_lo,
                                         ox * stride - g.pad_lo, kernel);
          if (idx >= 0) {
            gi[idx] += go[oy * g.wo + ox];
          }
        }
      }
    }
  }
  return grad_in;
}

template <class T>
Tensor<T> upsample2x(const Tensor<T>& input) {
  const Shape in = input.shape();
  Tensor<T> out(Shape{in.n, in.c, in.h * 2, in.w * 2});
  const int wo = in.w * 2;
  for (int b = 0; b < in.n; ++b) {
    for (int c = 0; c < in.c; ++c) {
      const T* src = input.plane(b, c);
      T* dst = out.plane(b, c);
      for (int y = 0; y < in.h; ++y) {
        T* r0 = dst + static_cast<std::size_t>(2 * y) * wo;
        T* r1 = r0 + wo;
        for (int x = 0; x < in.w; ++x) {
          const T v = src[y * in.w + x];
          r0[2 * x] = v;
          r0[2 * x + 1] = v;
          r1[2 * x] = v;
          r1[2 * x + 1] = v;
        }
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out) {
  const Shape go = grad_out.shape();
  if (go.h % 2 != 0 || go.w % 2 != 0) {
    throw ShapeError("upsample gradient must have even spatial size");
  }
  Tensor<T> grad_in(Shape{go.n, go.c, go.h / 2, go.w / 2});
  const int wi = go.w / 2;
  for (int b = 0; b < go.n; ++b) {
    for (int c = 0; c < go.c; ++c) {
      const T* src = grad_out.plane(b, c);
      T* dst = grad_in.plane(b, c);
      for (int y = 0; y < go.h / 2; ++y) {
        const T* r0 = src + static_cast<std::size_t>(2 * y) * go.w;
        const T* r1 = r0 + go.w;
        for (int x = 0; x < wi; ++x) {
          dst[y * wi + x] = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
        }
      }
    }
  }
  return grad_in;
}

template <class T>
Tensor<T> route(const std::vector<const Tensor<T>*>& inputs,
                std::optional<int> split_half) {
  if (inputs.empty()) {
    throw ShapeError("route needs at least one input");
  }
  const Shape first = inputs.front()->shape();
  if (split_half) {
    if (inputs.size() != 1) {
      throw ShapeError("split route takes exactly one input");
    }
    if (first.c % 2 != 0) {
      throw ShapeError("split route needs an even channel count, got " +
                       std::to_string(first.c));
    }
    if (*split_half != 0 && *split_half != 1) {
      throw ShapeError("split half must be 0 or 1");
    }
    const int half = first.c / 2;
    Tensor<T> out(Shape{first.n, half, first.h, first.w});
    for (int b = 0; b < first.n; ++b) {
      const T* src = inputs.front()->plane(b, *split_half * half);
      std::copy(src, src + half * first.plane(), out.plane(b, 0));
    }
    return out;
  }
  int channels = 0;
  for (const Tensor<T>* t : inputs) {
    const Shape s = t->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("route inputs disagree spatially: " + first.str() +
                       " vs " + s.str());
    }
    channels += s.c;
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  for (int b = 0; b < first.n; ++b) {
    T* dst = out.plane(b, 0);
    for (const Tensor<T>* t : inputs) {
      const std::size_t len = t->shape().c * first.plane();
      const T* src = t->plane(b, 0);
      dst = std::copy(src, src + len, dst);
    }
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> route_backward(const std::vector<Shape>& input_shapes,
                                      std::optional<int> split_half,
                                      const Tensor<T>& grad_out) {
  std::vector<Tensor<T>> grads;
  const Shape go = grad_out.shape();
  if (split_half) {
    const Shape in = input_shapes.at(0);
    Tensor<T> g(in);
    const int half = in.c / 2;
    for (int b = 0; b < in.n; ++b) {
      const T* src = grad_out.plane(b, 0);
      std::copy(src, src + half * in.plane(), g.plane(b, *split_half * half));
    }
    grads.push_back(std::move(g));
    return grads;
  }
  int c0 = 0;
  for (const Shape& s : input_shapes) {
    Tensor<T> g(s);
    for (int b = 0; b < s.n; ++b) {
      const T* src = grad_out.plane(b, c0);
      std::copy(src, src + s.c * s.plane(), g.plane(b, 0));
    }
    c0 += s.c;
    grads.push_back(std::move(g));
  }
  if (c0 != go.c) {
    throw ShapeError("route gradient channel count mismatch");
  }
  return grads;
}

#define EDGEYOLO_INSTANTIATE(T)                                                  \
  template struct ConvParams<T>;                                                 \
  template struct BatchNormParams<T>;                                            \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);             \
  template Tensor<T> conv2d_backward(const Tensor<T>&, const ConvParams<T>&,     \
                                     const Tensor<T>&, std::vector<T>&,          \
                                     std::vector<T>&);                           \
  template Tensor<T> batch_norm(const Tensor<T>&, const BatchNormParams<T>&);    \
  template Tensor<T> batch_norm_backward(const Tensor<T>&,                       \
                                         const BatchNormParams<T>&,              \
                                         const Tensor<T>&, std::vector<T>&,      \
                                         std::vector<T>&);                       \
  template Tensor<T> batch_norm_train(const Tensor<T>&, const BatchNormParams<T>&, \
                                      BatchStats<T>&);                           \
  template Tensor<T> batch_norm_train_backward(                                  \
      const Tensor<T>&, const BatchNormParams<T>&, const BatchStats<T>&,         \
      const Tensor<T>&, std::vector<T>&, std::vector<T>&);                       \
  template void update_running_stats(BatchNormParams<T>&, const BatchStats<T>&,  \
                                     T);                                         \
  template Tensor<T> activate(const Tensor<T>&, Activation, T);                  \
  template Tensor<T> activate_backward(const Tensor<T>&, const Tensor<T>&,       \
                                       Activation, T);                           \
  template Tensor<T> max_pool(const Tensor<T>&, int, int);                       \
  template Tensor<T> max_pool_backward(const Tensor<T>&, int, int,               \
                                       const Tensor<T>&);                        \
  template Tensor<T> upsample2x(const Tensor<T>&);                               \
  template Tensor<T> upsample2x_backward(const Tensor<T>&);                      \
  template Tensor<T> route(const std::vector<const Tensor<T>*>&,                 \
                           std::optional<int>);                                  \
  template std::vector<Tensor<T>> route_backward(const std::vector<Shape>&,      \
                                                 std::optional<int>,             \
                                                 const Tensor<T>&);

EDGEYOLO_INSTANTIATE(float)
EDGEYOLO_INSTANTIATE(double)

#undef EDGEYOLO_INSTANTIATE

}  // namespace edgeyolo::nn
