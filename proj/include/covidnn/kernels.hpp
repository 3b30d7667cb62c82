#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "covidnn/errors.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

enum class Padding { same, valid, explicit_pad };

struct Conv2dGeom {
  int stride = 1;
  Padding padding = Padding::same;
  int pad = 0;  // used only with explicit_pad, symmetric on all sides
};

struct Conv2dDims {
  int out_h = 0, out_w = 0;
  int pad_top = 0, pad_left = 0;
};

namespace detail {

inline std::pair<int, int> same_pad(int in, int k, int stride) {
  int out = (in + stride - 1) / stride;
  int total = std::max(0, (out - 1) * stride + k - in);
  int before = total / 2;  // smaller half leads, larger half trails
  return {before, total - before};
}

}  // namespace detail

inline Conv2dDims conv2d_dims(int in_h, int in_w, int k, const Conv2dGeom& g) {
  if (in_h < 1 || in_w < 1) throw std::invalid_argument("conv2d: empty input");
  if (k < 1) throw std::invalid_argument("conv2d: kernel size must be positive");
  if (g.stride < 1) throw std::invalid_argument("conv2d: stride must be positive");

  Conv2dDims d;
  switch (g.padding) {
    case Padding::same: {
      auto [top, bottom] = detail::same_pad(in_h, k, g.stride);
      auto [left, right] = detail::same_pad(in_w, k, g.stride);
      d.pad_top = top;
      d.pad_left = left;
      d.out_h = (in_h + top + bottom - k) / g.stride + 1;
      d.out_w = (in_w + left + right - k) / g.stride + 1;
      break;
    }
    case Padding::valid:
      d.pad_top = d.pad_left = 0;
      if (k > in_h || k > in_w)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(k) +
                                    " larger than unpadded input " + std::to_string(in_h) + "x" +
                                    std::to_string(in_w));
      d.out_h = (in_h - k) / g.stride + 1;
      d.out_w = (in_w - k) / g.stride + 1;
      break;
    case Padding::explicit_pad:
      if (g.pad < 0) throw std::invalid_argument("conv2d: negative padding");
      d.pad_top = d.pad_left = g.pad;
      if (k > in_h + 2 * g.pad || k > in_w + 2 * g.pad)
        throw std::invalid_argument("conv2d: kernel " + std::to_string(k) +
                                    " larger than padded input");
      d.out_h = (in_h + 2 * g.pad - k) / g.stride + 1;
      d.out_w = (in_w + 2 * g.pad - k) / g.stride + 1;
      break;
  }
  return d;
}

namespace detail {

template <typename Scalar>
void conv_check(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                const Tensor<Scalar>* bias) {
  input.require_rank(3);
  kernels.require_rank(4);
  if (kernels.extent(0) != kernels.extent(1))
    throw std::invalid_argument("conv2d: kernels must be square, got " +
                                shape_to_string(kernels.shape()));
  if (kernels.extent(2) != input.extent(2))
    throw std::invalid_argument("conv2d: kernel channels " + std::to_string(kernels.extent(2)) +
                                " != input channels " + std::to_string(input.extent(2)));
  if (bias) {
    bias->require_rank(1);
    if (bias->extent(0) != kernels.extent(3))
      throw std::invalid_argument("conv2d: bias size " + std::to_string(bias->extent(0)) +
                                  " != filter count " + std::to_string(kernels.extent(3)));
  }
}

// Patch matrix rows follow output positions (oy, ox); columns follow
// (kh, kw, c), matching the flat layout of a K x K x C x F kernel tensor.
template <typename Scalar>
void im2col(const Tensor<Scalar>& input, int k, const Conv2dGeom& g, const Conv2dDims& d,
            std::vector<Scalar>& patches) {
  const int h = input.extent(0), w = input.extent(1), c = input.extent(2);
  const std::int64_t cols = static_cast<std::int64_t>(k) * k * c;
  patches.assign(static_cast<std::size_t>(d.out_h) * d.out_w * cols, Scalar(0));
  const Scalar* in = input.data();
  Scalar* row = patches.data();
  for (int oy = 0; oy < d.out_h; ++oy) {
    for (int ox = 0; ox < d.out_w; ++ox, row += cols) {
      for (int kh = 0; kh < k; ++kh) {
        int iy = oy * g.stride - d.pad_top + kh;
        if (iy < 0 || iy >= h) continue;
        for (int kw = 0; kw < k; ++kw) {
          int ix = ox * g.stride - d.pad_left + kw;
          if (ix < 0 || ix >= w) continue;
          std::memcpy(row + (static_cast<std::int64_t>(kh) * k + kw) * c,
                      in + (static_cast<std::int64_t>(iy) * w + ix) * c,
                      sizeof(Scalar) * static_cast<std::size_t>(c));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add patch-space values back onto the image.
template <typename Scalar>
void col2im(const std::vector<Scalar>& patches, int k, const Conv2dGeom& g, const Conv2dDims& d,
            Tensor<Scalar>& grad_input) {
  const int h = grad_input.extent(0), w = grad_input.extent(1), c = grad_input.extent(2);
  const std::int64_t cols = static_cast<std::int64_t>(k) * k * c;
  const Scalar* row = patches.data();
  Scalar* out = grad_input.data();
  for (int oy = 0; oy < d.out_h; ++oy) {
    for (int ox = 0; ox < d.out_w; ++ox, row += cols) {
      for (int kh = 0; kh < k; ++kh) {
        int iy = oy * g.stride - d.pad_top + kh;
        if (iy < 0 || iy >= h) continue;
        for (int kw = 0; kw < k; ++kw) {
          int ix = ox * g.stride - d.pad_left + kw;
          if (ix < 0 || ix >= w) continue;
          const Scalar* src = row + (static_cast<std::int64_t>(kh) * k + kw) * c;
          Scalar* dst = out + (static_cast<std::int64_t>(iy) * w + ix) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace detail

// input: H x W x C, kernels: K x K x C x F (cross-correlation, no flip),
// bias: F. Returns out_h x out_w x F.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                              const Tensor<Scalar>& bias, const Conv2dGeom& geom) {
  detail::conv_check(input, kernels, &bias);
  const int k = kernels.extent(0), c = input.extent(2), f = kernels.extent(3);
  Conv2dDims d = conv2d_dims(input.extent(0), input.extent(1), k, geom);

  std::vector<Scalar> patches;
  detail::im2col(input, k, geom, d, patches);
  const std::int64_t rows = static_cast<std::int64_t>(d.out_h) * d.out_w;
  const std::int64_t cols = static_cast<std::int64_t>(k) * k * c;

  Tensor<Scalar> out({d.out_h, d.out_w, f});
  ConstMatrixMap<Scalar> p(patches.data(), rows, cols);
  auto o = out.as_matrix(rows, f);
  o.noalias() = p * kernels.as_matrix(cols, f);
  o.rowwise() += ConstMatrixMap<Scalar>(bias.data(), 1, f).row(0);
  return out;
}

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> kernels;
  Tensor<Scalar> bias;
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels,
                                    const Tensor<Scalar>& grad_output, const Conv2dGeom& geom) {
  detail::conv_check<Scalar>(input, kernels, nullptr);
  const int k = kernels.extent(0), c = input.extent(2), f = kernels.extent(3);
  Conv2dDims d = conv2d_dims(input.extent(0), input.extent(1), k, geom);
  grad_output.require_rank(3);
  if (grad_output.extent(0) != d.out_h || grad_output.extent(1) != d.out_w ||
      grad_output.extent(2) != f)
    throw std::invalid_argument("conv2d_backward: grad_output shape " +
                                shape_to_string(grad_output.shape()) + " does not match output " +
                                shape_to_string({d.out_h, d.out_w, f}));

  std::vector<Scalar> patches;
  detail::im2col(input, k, geom, d, patches);
  const std::int64_t rows = static_cast<std::int64_t>(d.out_h) * d.out_w;
  const std::int64_t cols = static_cast<std::int64_t>(k) * k * c;
  ConstMatrixMap<Scalar> p(patches.data(), rows, cols);
  auto g = grad_output.as_matrix(rows, f);

  Conv2dGrads<Scalar> grads;
  grads.kernels = Tensor<Scalar>(kernels.shape());
  grads.kernels.as_matrix(cols, f).noalias() = p.transpose() * g;

  // summed in fixed row order; Eigen's redux order varies with buffer address
  grads.bias = Tensor<Scalar>({f});
  Scalar* bias_grad = grads.bias.data();
  const Scalar* go = grad_output.data();
  for (std::int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < f; ++j) bias_grad[j] += go[r * f + j];

  std::vector<Scalar> grad_patches(static_cast<std::size_t>(rows * cols));
  MatrixMap<Scalar>(grad_patches.data(), rows, cols).noalias() =
      g * kernels.as_matrix(cols, f).transpose();
  grads.input = Tensor<Scalar>(input.shape());
  detail::col2im(grad_patches, k, geom, d, grads.input);
  return grads;
}

// Plain rank-2 matrix product.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  a.require_rank(2);
  b.require_rank(2);
  if (a.extent(1) != b.extent(0))
    throw std::invalid_argument("matmul: inner extents differ, " + shape_to_string(a.shape()) +
                                " x " + shape_to_string(b.shape()));
  Tensor<Scalar> out({a.extent(0), b.extent(1)});
  out.as_matrix().noalias() = a.as_matrix() * b.as_matrix();
  return out;
}

template <typename Scalar>
struct MaxPool2dResult {
  Tensor<Scalar> output;
  // Flat input index of each output element's source; ties go to the first
  // candidate in row-major window scan order.
  std::vector<std::int64_t> argmax;
};

template <typename Scalar>
MaxPool2dResult<Scalar> maxpool_forward(const Tensor<Scalar>& input, int window, int stride) {
  input.require_rank(3);
  if (window < 1 || stride < 1)
    throw std::invalid_argument("maxpool: window and stride must be positive");
  const int h = input.extent(0), w = input.extent(1), c = input.extent(2);
  if (window > h || window > w)
    throw std::invalid_argument("maxpool: window " + std::to_string(window) +
                                " does not fit input " + shape_to_string(input.shape()));
  const int oh = (h - window) / stride + 1;
  const int ow = (w - window) / stride + 1;

  MaxPool2dResult<Scalar> r;
  r.output = Tensor<Scalar>({oh, ow, c});
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  const Scalar* in = input.data();
  Scalar* out = r.output.data();
  std::int64_t o = 0;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      for (int ch = 0; ch < c; ++ch, ++o) {
        std::int64_t best_idx = -1;
        Scalar best = Scalar(0);
        for (int ky = 0; ky < window; ++ky) {
          const int iy = oy * stride + ky;
          for (int kx = 0; kx < window; ++kx) {
            const int ix = ox * stride + kx;
            const std::int64_t idx = (static_cast<std::int64_t>(iy) * w + ix) * c + ch;
            if (best_idx < 0 || in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        out[o] = best;
        r.argmax[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool_backward(const std::vector<std::int64_t>& argmax,
                                const Tensor<Scalar>& grad_output,
                                const std::vector<int>& input_shape) {
  if (argmax.size() != static_cast<std::size_t>(grad_output.size()))
    throw std::invalid_argument("maxpool_backward: argmax/grad size mismatch");
  Tensor<Scalar> grad_input(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i)
    grad_input[argmax[i]] += grad_output[static_cast<std::int64_t>(i)];
  return grad_input;
}

// Cross-channel local response normalization (Krizhevsky et al. 2012):
//   b_c = a_c / (k + (alpha/n) * sum_{c' in window(c)} a_{c'}^2)^beta
// with window(c) = [c - (n-1)/2, c + n/2] clipped to valid channels.
struct LrnParams {
  double k = 2.0;
  int n = 5;
  double alpha = 1e-4;
  double beta = 0.75;
};

namespace detail {

inline void lrn_check(const LrnParams& p) {
  if (p.n < 1) throw std::invalid_argument("lrn: window size must be positive");
  if (p.alpha < 0) throw std::invalid_argument("lrn: alpha must be non-negative");
}

inline double lrn_denom(double k, double scaled_sq_sum) {
  double d = k + scaled_sq_sum;
  if (d <= 0.0)
    throw NumericError("lrn: non-positive normalization denominator (k = " + std::to_string(k) +
                       ")");
  return d;
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> lrn_forward(const Tensor<Scalar>& input, const LrnParams& p) {
  input.require_rank(3);
  detail::lrn_check(p);
  const int h = input.extent(0), w = input.extent(1), c = input.extent(2);
  const int lo_off = (p.n - 1) / 2, hi_off = p.n / 2;
  const double scale = p.alpha / p.n;

  Tensor<Scalar> out(input.shape());
  const Scalar* in = input.data();
  Scalar* o = out.data();
  for (std::int64_t pos = 0; pos < static_cast<std::int64_t>(h) * w; ++pos) {
    const Scalar* a = in + pos * c;
    Scalar* b = o + pos * c;
    for (int ch = 0; ch < c; ++ch) {
      const int lo = std::max(0, ch - lo_off);
      const int hi = std::min(c - 1, ch + hi_off);
      double s = 0.0;
      for (int e = lo; e <= hi; ++e) s += static_cast<double>(a[e]) * static_cast<double>(a[e]);
      double d = detail::lrn_denom(p.k, scale * s);
      b[ch] = static_cast<Scalar>(static_cast<double>(a[ch]) * std::pow(d, -p.beta));
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> lrn_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_output,
                            const LrnParams& p) {
  input.require_rank(3);
  detail::lrn_check(p);
  if (input.shape() != grad_output.shape())
    throw std::invalid_argument("lrn_backward: input/grad shape mismatch");
  const int h = input.extent(0), w = input.extent(1), c = input.extent(2);
  const int lo_off = (p.n - 1) / 2, hi_off = p.n / 2;
  const double scale = p.alpha / p.n;

  Tensor<Scalar> grad_input(input.shape());
  std::vector<double> denom(static_cast<std::size_t>(c));
  std::vector<double> acc(static_cast<std::size_t>(c));
  const Scalar* in = input.data();
  const Scalar* go = grad_output.data();
  Scalar* gi = grad_input.data();
  for (std::int64_t pos = 0; pos < static_cast<std::int64_t>(h) * w; ++pos) {
    const Scalar* a = in + pos * c;
    const Scalar* g = go + pos * c;
    Scalar* out = gi + pos * c;
    for (int ch = 0; ch < c; ++ch) {
      const int lo = std::max(0, ch - lo_off);
      const int hi = std::min(c - 1, ch + hi_off);
      double s = 0.0;
      for (int e = lo; e <= hi; ++e) s += static_cast<double>(a[e]) * static_cast<double>(a[e]);
      denom[static_cast<std::size_t>(ch)] = detail::lrn_denom(p.k, scale * s);
    }
    // b_c depends on every a_e inside window(c); accumulate each output
    // channel's contribution onto the inputs it covers.
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int ch = 0; ch < c; ++ch) {
      const int lo = std::max(0, ch - lo_off);
      const int hi = std::min(c - 1, ch + hi_off);
      const double t = static_cast<double>(g[ch]) * static_cast<double>(a[ch]) *
                       std::pow(denom[static_cast<std::size_t>(ch)], -p.beta - 1.0);
      for (int e = lo; e <= hi; ++e) acc[static_cast<std::size_t>(e)] += t;
    }
    for (int e = 0; e < c; ++e) {
      const double direct = static_cast<double>(g[e]) *
                            std::pow(denom[static_cast<std::size_t>(e)], -p.beta);
      out[e] = static_cast<Scalar>(direct - 2.0 * scale * p.beta * static_cast<double>(a[e]) *
                                                acc[static_cast<std::size_t>(e)]);
    }
  }
  return grad_input;
}

}  // namespace covidnn
