#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "covidnn/errors.hpp"
#include "covidnn/init.hpp"
#include "covidnn/kernels.hpp"
#include "covidnn/parallel.hpp"
#include "covidnn/rng.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

enum class Mode { train, infer };

// Named view of one parameter tensor and its gradient slot. The gradient
// tensor is empty until the first backward pass fills it.
template <typename Scalar>
struct ParamRef {
  std::string name;
  Tensor<Scalar>* value = nullptr;
  Tensor<Scalar>* grad = nullptr;
  bool trainable = true;
};

// Forward in train mode caches whatever backward needs; forward in infer mode
// touches no mutable state, so concurrent infer calls on one layer are safe.
// backward requires a preceding train-mode forward.
template <typename Scalar>
class Layer {
public:
  virtual ~Layer() = default;

  virtual const char* kind() const = 0;
  const std::string& name() const { return name_; }

  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) = 0;
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) = 0;
  virtual std::vector<ParamRef<Scalar>> params() { return {}; }
  virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;

  bool trainable = true;

protected:
  explicit Layer(std::string name) : name_(std::move(name)) {}

  void note_train_forward() { has_train_forward_ = true; }
  void require_train_forward() const {
    if (!has_train_forward_)
      throw std::logic_error(std::string(kind()) + " '" + name_ +
                             "': backward without a preceding train-mode forward");
  }

  std::string name_;
  bool has_train_forward_ = false;
};

namespace detail {

// Leading batch axis is implicit: rank-3 input means a single H x W x C image.
inline std::vector<int> image_shape(const std::vector<int>& s, const char* who) {
  if (s.size() == 3) return s;
  if (s.size() == 4) return {s[1], s[2], s[3]};
  throw std::invalid_argument(std::string(who) + ": expected H x W x C input, got " +
                              shape_to_string(s));
}

}  // namespace detail

template <typename Scalar>
class Conv2dLayer final : public Layer<Scalar> {
public:
  Conv2dLayer(std::string name, int in_channels, int filters, int kernel, int stride,
              Padding padding, int pad = 0, int groups = 1)
      : Layer<Scalar>(std::move(name)),
        in_channels_(in_channels),
        filters_(filters),
        kernel_(kernel),
        groups_(groups),
        geom_{stride, padding, pad} {
    if (in_channels < 1 || filters < 1)
      throw std::invalid_argument("conv: channel and filter counts must be positive");
    if (groups < 1 || in_channels % groups != 0 || filters % groups != 0)
      throw std::invalid_argument("conv '" + this->name_ + "': groups " + std::to_string(groups) +
                                  " must divide channels " + std::to_string(in_channels) +
                                  " and filters " + std::to_string(filters));
    (void)conv2d_dims(kernel, kernel, kernel, geom_);  // validates stride/pad
    weight_ = Tensor<Scalar>({kernel, kernel, in_channels / groups, filters});
    bias_ = Tensor<Scalar>({filters});
  }

  const char* kind() const override { return "conv"; }

  void init_params(SeededRng& rng) {
    const int fan_in = kernel_ * kernel_ * (in_channels_ / groups_);
    const int fan_out = kernel_ * kernel_ * (filters_ / groups_);
    weight_ = glorot_uniform<Scalar>(fan_in, fan_out, weight_.shape(), rng);
    bias_.fill(Scalar(0));
  }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    auto s = detail::image_shape(in, "conv");
    if (s[2] != in_channels_)
      throw InvalidArchitectureError("conv '" + this->name_ + "': expected " +
                                     std::to_string(in_channels_) + " input channels, got " +
                                     shape_to_string(in));
    Conv2dDims d = conv2d_dims(s[0], s[1], kernel_, geom_);
    return {d.out_h, d.out_w, filters_};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    x.require_rank(4);
    if (x.extent(3) != in_channels_)
      throw std::invalid_argument("conv '" + this->name_ + "': input channels " +
                                  std::to_string(x.extent(3)) + " != " +
                                  std::to_string(in_channels_));
    const int n = x.extent(0);
    auto out_img = output_shape({x.extent(1), x.extent(2), x.extent(3)});
    Tensor<Scalar> out({n, out_img[0], out_img[1], out_img[2]});

    const std::int64_t in_img_size = x.size() / n;
    const std::int64_t out_img_size = out.size() / n;
    parallel_for(n, [&](std::int64_t i) {
      Tensor<Scalar> img = image_slice(x, i, in_img_size);
      Tensor<Scalar> res = forward_one(img);
      std::copy(res.begin(), res.end(), out.begin() + i * out_img_size);
    });

    if (mode == Mode::train) {
      cached_input_ = x;
      this->note_train_forward();
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    this->require_train_forward();
    grad_out.require_rank(4);
    const Tensor<Scalar>& x = cached_input_;
    const int n = x.extent(0);
    if (grad_out.extent(0) != n)
      throw std::invalid_argument("conv backward: batch size mismatch");

    Tensor<Scalar> grad_input(x.shape());
    std::vector<Tensor<Scalar>> w_parts(static_cast<std::size_t>(n));
    std::vector<Tensor<Scalar>> b_parts(static_cast<std::size_t>(n));
    const std::int64_t in_img_size = x.size() / n;
    const std::int64_t out_img_size = grad_out.size() / n;
    parallel_for(n, [&](std::int64_t i) {
      Tensor<Scalar> img = image_slice(x, i, in_img_size);
      Tensor<Scalar> g({grad_out.extent(1), grad_out.extent(2), grad_out.extent(3)});
      std::copy(grad_out.begin() + i * out_img_size, grad_out.begin() + (i + 1) * out_img_size,
                g.begin());
      auto [gi, gw, gb] = backward_one(img, g);
      std::copy(gi.begin(), gi.end(), grad_input.begin() + i * in_img_size);
      w_parts[static_cast<std::size_t>(i)] = std::move(gw);
      b_parts[static_cast<std::size_t>(i)] = std::move(gb);
    });

    // Reduce in batch order so results do not depend on thread schedule.
    grad_weight_ = Tensor<Scalar>(weight_.shape());
    grad_bias_ = Tensor<Scalar>(bias_.shape());
    auto wsum = grad_weight_.as_matrix(1, grad_weight_.size());
    auto bsum = grad_bias_.as_matrix(1, grad_bias_.size());
    for (int i = 0; i < n; ++i) {
      wsum += w_parts[static_cast<std::size_t>(i)].as_matrix(1, grad_weight_.size());
      bsum += b_parts[static_cast<std::size_t>(i)].as_matrix(1, grad_bias_.size());
    }
    return grad_input;
  }

  std::vector<ParamRef<Scalar>> params() override {
    return {{this->name_ + ".weight", &weight_, &grad_weight_, this->trainable},
            {this->name_ + ".bias", &bias_, &grad_bias_, this->trainable}};
  }

  Tensor<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }
  int groups() const { return groups_; }

private:
  static Tensor<Scalar> image_slice(const Tensor<Scalar>& batch, std::int64_t i,
                                    std::int64_t img_size) {
    Tensor<Scalar> img({batch.extent(1), batch.extent(2), batch.extent(3)});
    std::copy(batch.begin() + i * img_size, batch.begin() + (i + 1) * img_size, img.begin());
    return img;
  }

  static Tensor<Scalar> channel_slice(const Tensor<Scalar>& img, int c0, int c1) {
    const int h = img.extent(0), w = img.extent(1), c = img.extent(2);
    Tensor<Scalar> out({h, w, c1 - c0});
    const Scalar* in = img.data();
    Scalar* o = out.data();
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p)
      std::copy(in + p * c + c0, in + p * c + c1, o + p * (c1 - c0));
    return out;
  }

  static void channel_paste(Tensor<Scalar>& img, const Tensor<Scalar>& part, int c0) {
    const int h = img.extent(0), w = img.extent(1), c = img.extent(2);
    const int pc = part.extent(2);
    const Scalar* in = part.data();
    Scalar* o = img.data();
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p)
      std::copy(in + p * pc, in + p * pc + pc, o + p * c + c0);
  }

  // Filter block [f0, f1) of the K x K x Cg x F weight tensor.
  Tensor<Scalar> filter_slice(const Tensor<Scalar>& w, int f0, int f1) const {
    const int nf = f1 - f0;
    Tensor<Scalar> out({w.extent(0), w.extent(1), w.extent(2), nf});
    const std::int64_t rows = w.size() / filters_;
    const Scalar* in = w.data();
    Scalar* o = out.data();
    for (std::int64_t r = 0; r < rows; ++r)
      std::copy(in + r * filters_ + f0, in + r * filters_ + f1, o + r * nf);
    return out;
  }

  void filter_paste(Tensor<Scalar>& w, const Tensor<Scalar>& part, int f0) const {
    const int nf = part.extent(3);
    const std::int64_t rows = w.size() / filters_;
    const Scalar* in = part.data();
    Scalar* o = w.data();
    for (std::int64_t r = 0; r < rows; ++r)
      std::copy(in + r * nf, in + r * nf + nf, o + r * filters_ + f0);
  }

  Tensor<Scalar> forward_one(const Tensor<Scalar>& img) const {
    if (groups_ == 1) return conv2d_forward(img, weight_, bias_, geom_);
    const int cg = in_channels_ / groups_, fg = filters_ / groups_;
    Conv2dDims d = conv2d_dims(img.extent(0), img.extent(1), kernel_, geom_);
    Tensor<Scalar> out({d.out_h, d.out_w, filters_});
    for (int g = 0; g < groups_; ++g) {
      Tensor<Scalar> xin = channel_slice(img, g * cg, (g + 1) * cg);
      Tensor<Scalar> wk = filter_slice(weight_, g * fg, (g + 1) * fg);
      Tensor<Scalar> bg({fg});
      std::copy(bias_.begin() + g * fg, bias_.begin() + (g + 1) * fg, bg.begin());
      channel_paste(out, conv2d_forward(xin, wk, bg, geom_), g * fg);
    }
    return out;
  }

  std::tuple<Tensor<Scalar>, Tensor<Scalar>, Tensor<Scalar>> backward_one(
      const Tensor<Scalar>& img, const Tensor<Scalar>& g) const {
    if (groups_ == 1) {
      auto grads = conv2d_backward(img, weight_, g, geom_);
      return {std::move(grads.input), std::move(grads.kernels), std::move(grads.bias)};
    }
    const int cg = in_channels_ / groups_, fg = filters_ / groups_;
    Tensor<Scalar> gi(img.shape());
    Tensor<Scalar> gw(weight_.shape());
    Tensor<Scalar> gb(bias_.shape());
    for (int gr = 0; gr < groups_; ++gr) {
      Tensor<Scalar> xin = channel_slice(img, gr * cg, (gr + 1) * cg);
      Tensor<Scalar> wk = filter_slice(weight_, gr * fg, (gr + 1) * fg);
      Tensor<Scalar> gout = channel_slice(g, gr * fg, (gr + 1) * fg);
      auto grads = conv2d_backward(xin, wk, gout, geom_);
      channel_paste(gi, grads.input, gr * cg);
      filter_paste(gw, grads.kernels, gr * fg);
      std::copy(grads.bias.begin(), grads.bias.end(), gb.begin() + gr * fg);
    }
    return {std::move(gi), std::move(gw), std::move(gb)};
  }

  int in_channels_, filters_, kernel_, groups_;
  Conv2dGeom geom_;
  Tensor<Scalar> weight_, bias_;
  Tensor<Scalar> grad_weight_, grad_bias_;
  Tensor<Scalar> cached_input_;
};

template <typename Scalar>
class BatchNormLayer final : public Layer<Scalar> {
public:
  BatchNormLayer(std::string name, int channels, double eps = 1e-5, double momentum = 0.1)
      : Layer<Scalar>(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum) {
    if (channels < 1) throw std::invalid_argument("batchnorm: channels must be positive");
    gamma_ = Tensor<Scalar>::full({channels}, Scalar(1));
    beta_ = Tensor<Scalar>({channels});
    running_mean_ = Tensor<Scalar>({channels});
    running_var_ = Tensor<Scalar>::full({channels}, Scalar(1));
  }

  const char* kind() const override { return "batchnorm"; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    auto s = detail::image_shape(in, "batchnorm");
    if (s[2] != channels_)
      throw InvalidArchitectureError("batchnorm '" + this->name_ + "': expected " +
                                     std::to_string(channels_) + " channels, got " +
                                     shape_to_string(in));
    return s;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    x.require_rank(4);
    if (x.extent(3) != channels_)
      throw std::invalid_argument("batchnorm '" + this->name_ + "': channel mismatch");
    return mode == Mode::train ? forward_train(x) : forward_infer(x);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    this->require_train_forward();
    if (grad_out.shape() != cached_xhat_.shape())
      throw std::invalid_argument("batchnorm backward: grad shape mismatch");
    const std::int64_t m = grad_out.size() / channels_;
    const int c = channels_;

    grad_gamma_ = Tensor<Scalar>({c});
    grad_beta_ = Tensor<Scalar>({c});
    std::vector<double> sum_g(static_cast<std::size_t>(c), 0.0);
    std::vector<double> sum_gx(static_cast<std::size_t>(c), 0.0);
    const Scalar* g = grad_out.data();
    const Scalar* xh = cached_xhat_.data();
    for (std::int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const double gv = static_cast<double>(g[i * c + ch]);
        sum_g[static_cast<std::size_t>(ch)] += gv;
        sum_gx[static_cast<std::size_t>(ch)] += gv * static_cast<double>(xh[i * c + ch]);
      }
    for (int ch = 0; ch < c; ++ch) {
      grad_beta_[ch] = static_cast<Scalar>(sum_g[static_cast<std::size_t>(ch)]);
      grad_gamma_[ch] = static_cast<Scalar>(sum_gx[static_cast<std::size_t>(ch)]);
    }

    // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
    Tensor<Scalar> grad_input(grad_out.shape());
    Scalar* gi = grad_input.data();
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const auto chs = static_cast<std::size_t>(ch);
        const double centered = static_cast<double>(g[i * c + ch]) - sum_g[chs] * inv_m -
                                static_cast<double>(xh[i * c + ch]) * sum_gx[chs] * inv_m;
        gi[i * c + ch] =
            static_cast<Scalar>(static_cast<double>(gamma_[ch]) * inv_std_[chs] * centered);
      }
    return grad_input;
  }

  std::vector<ParamRef<Scalar>> params() override {
    return {{this->name_ + ".gamma", &gamma_, &grad_gamma_, this->trainable},
            {this->name_ + ".beta", &beta_, &grad_beta_, this->trainable},
            {this->name_ + ".running_mean", &running_mean_, &grad_none_, false},
            {this->name_ + ".running_var", &running_var_, &grad_none_, false}};
  }

  bool stats_initialized() const { return stats_initialized_; }
  void mark_stats_initialized() { stats_initialized_ = true; }
  bool last_batch_was_single() const { return last_batch_single_; }
  const Tensor<Scalar>& running_mean() const { return running_mean_; }
  const Tensor<Scalar>& running_var() const { return running_var_; }

private:
  Tensor<Scalar> forward_train(const Tensor<Scalar>& x) {
    const int c = channels_;
    const std::int64_t m = x.size() / c;
    last_batch_single_ = x.extent(0) == 1;

    std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
    std::vector<double> var(static_cast<std::size_t>(c), 0.0);
    const Scalar* in = x.data();
    for (std::int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] += in[i * c + ch];
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const double d = static_cast<double>(in[i * c + ch]) - mean[static_cast<std::size_t>(ch)];
        var[static_cast<std::size_t>(ch)] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(m);  // biased, no Bessel correction

    inv_std_.resize(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch)
      inv_std_[static_cast<std::size_t>(ch)] =
          1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + eps_);

    cached_xhat_ = Tensor<Scalar>(x.shape());
    Tensor<Scalar> out(x.shape());
    Scalar* xh = cached_xhat_.data();
    Scalar* o = out.data();
    for (std::int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const auto chs = static_cast<std::size_t>(ch);
        const double v =
            (static_cast<double>(in[i * c + ch]) - mean[chs]) * inv_std_[chs];
        xh[i * c + ch] = static_cast<Scalar>(v);
        o[i * c + ch] = static_cast<Scalar>(static_cast<double>(gamma_[ch]) * v +
                                            static_cast<double>(beta_[ch]));
      }

    for (int ch = 0; ch < c; ++ch) {
      const auto chs = static_cast<std::size_t>(ch);
      running_mean_[ch] = static_cast<Scalar>((1.0 - momentum_) * running_mean_[ch] +
                                              momentum_ * mean[chs]);
      running_var_[ch] = static_cast<Scalar>((1.0 - momentum_) * running_var_[ch] +
                                             momentum_ * var[chs]);
    }
    stats_initialized_ = true;
    this->note_train_forward();
    return out;
  }

  Tensor<Scalar> forward_infer(const Tensor<Scalar>& x) const {
    if (!stats_initialized_)
      throw UninitializedStatsError("batchnorm '" + this->name_ +
                                    "': inference before any batch statistics exist");
    const int c = channels_;
    const std::int64_t m = x.size() / c;
    Tensor<Scalar> out(x.shape());
    const Scalar* in = x.data();
    Scalar* o = out.data();
    std::vector<double> scale(static_cast<std::size_t>(c)), shift(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[ch]) + eps_);
      scale[static_cast<std::size_t>(ch)] = static_cast<double>(gamma_[ch]) * inv;
      shift[static_cast<std::size_t>(ch)] =
          static_cast<double>(beta_[ch]) -
          static_cast<double>(running_mean_[ch]) * scale[static_cast<std::size_t>(ch)];
    }
    for (std::int64_t i = 0; i < m; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const auto chs = static_cast<std::size_t>(ch);
        o[i * c + ch] = static_cast<Scalar>(scale[chs] * in[i * c + ch] + shift[chs]);
      }
    return out;
  }

  int channels_;
  double eps_, momentum_;
  Tensor<Scalar> gamma_, beta_, running_mean_, running_var_;
  Tensor<Scalar> grad_gamma_, grad_beta_, grad_none_;
  Tensor<Scalar> cached_xhat_;
  std::vector<double> inv_std_;
  bool stats_initialized_ = false;
  bool last_batch_single_ = false;
};

template <typename Scalar>
class ReluLayer final : public Layer<Scalar> {
public:
  explicit ReluLayer(std::string name = "relu") : Layer<Scalar>(std::move(name)) {}

  const char* kind() const override { return "relu"; }

  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    Tensor<Scalar> out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > Scalar(0) ? x[i] : Scalar(0);
    if (mode == Mode::train) {
      // Subgradient at exactly 0 is taken as 0.
      mask_.assign(static_cast<std::size_t>(x.size()), 0);
      for (std::int64_t i = 0; i < x.size(); ++i)
        mask_[static_cast<std::size_t>(i)] = x[i] > Scalar(0);
      cached_shape_ = x.shape();
      this->note_train_forward();
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    this->require_train_forward();
    if (grad_out.shape() != cached_shape_)
      throw std::invalid_argument("relu backward: grad shape mismatch");
    Tensor<Scalar> grad_input(grad_out.shape());
    for (std::int64_t i = 0; i < grad_out.size(); ++i)
      grad_input[i] = mask_[static_cast<std::size_t>(i)] ? grad_out[i] : Scalar(0);
    return grad_input;
  }

private:
  std::vector<char> mask_;
  std::vector<int> cached_shape_;
};

template <typename Scalar>
class MaxPoolLayer final : public Layer<Scalar> {
public:
  MaxPoolLayer(std::string name, int window, int stride)
      : Layer<Scalar>(std::move(name)), window_(window), stride_(stride) {
    if (window < 1 || stride < 1)
      throw std::invalid_argument("maxpool: window and stride must be positive");
  }

  const char* kind() const override { return "maxpool"; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    auto s = detail::image_shape(in, "maxpool");
    if (window_ > s[0] || window_ > s[1])
      throw InvalidArchitectureError("maxpool '" + this->name_ + "': window " +
                                     std::to_string(window_) + " does not fit " +
                                     shape_to_string(in));
    return {(s[0] - window_) / stride_ + 1, (s[1] - window_) / stride_ + 1, s[2]};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    x.require_rank(4);
    const int n = x.extent(0);
    auto out_img = output_shape({x.extent(1), x.extent(2), x.extent(3)});
    Tensor<Scalar> out({n, out_img[0], out_img[1], out_img[2]});
    const std::int64_t in_img = x.size() / n, out_img_size = out.size() / n;

    std::vector<std::vector<std::int64_t>> argmax(static_cast<std::size_t>(n));
    parallel_for(n, [&](std::int64_t i) {
      Tensor<Scalar> img({x.extent(1), x.extent(2), x.extent(3)});
      std::copy(x.begin() + i * in_img, x.begin() + (i + 1) * in_img, img.begin());
      auto r = maxpool_forward(img, window_, stride_);
      std::copy(r.output.begin(), r.output.end(), out.begin() + i * out_img_size);
      argmax[static_cast<std::size_t>(i)] = std::move(r.argmax);
    });

    if (mode == Mode::train) {
      argmax_ = std::move(argmax);
      in_shape_ = x.shape();
      this->note_train_forward();
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    this->require_train_forward();
    const int n = in_shape_[0];
    if (grad_out.rank() != 4 || grad_out.extent(0) != n)
      throw std::invalid_argument("maxpool backward: grad shape mismatch");
    Tensor<Scalar> grad_input(in_shape_);
    const std::int64_t in_img = grad_input.size() / n;
    const std::int64_t out_img = grad_out.size() / n;
    std::vector<int> img_shape{in_shape_[1], in_shape_[2], in_shape_[3]};
    parallel_for(n, [&](std::int64_t i) {
      Tensor<Scalar> g({grad_out.extent(1), grad_out.extent(2), grad_out.extent(3)});
      std::copy(grad_out.begin() + i * out_img, grad_out.begin() + (i + 1) * out_img, g.begin());
      Tensor<Scalar> gi = maxpool_backward(argmax_[static_cast<std::size_t>(i)], g, img_shape);
      std::copy(gi.begin(), gi.end(), grad_input.begin() + i * in_img);
    });
    return grad_input;
  }

private:
  int window_, stride_;
  std::vector<std::vector<std::int64_t>> argmax_;
  std::vector<int> in_shape_;
};

template <typename Scalar>
class LrnLayer final : public Layer<Scalar> {
public:
  LrnLayer(std::string name, LrnParams params) : Layer<Scalar>(std::move(name)), p_(params) {
    detail::lrn_check(p_);
  }

  const char* kind() const override { return "lrn"; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    return detail::image_shape(in, "lrn");
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    x.require_rank(4);
    const int n = x.extent(0);
    Tensor<Scalar> out(x.shape());
    const std::int64_t img = x.size() / n;
    parallel_for(n, [&](std::int64_t i) {
      Tensor<Scalar> im({x.extent(1), x.extent(2), x.extent(3)});
      std::copy(x.begin() + i * img, x.begin() + (i + 1) * img, im.begin());
      Tensor<Scalar> r = lrn_forward(im, p_);
      std::copy(r.begin(), r.end(), out.begin() + i * img);
    });
    if (mode == Mode::train) {
      cached_input_ = x;
      this->note_train_forward();
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    this->require_train_forward();
    if (grad_out.shape() != cached_input_.shape())
      throw std::invalid_argument("lrn backward: grad shape mismatch");
    const int n = cached_input_.extent(0);
    Tensor<Scalar> grad_input(cached_input_.shape());
    const std::int64_t img = cached_input_.size() / n;
    parallel_for(n, [&](std::int64_t i) {
      Tensor<Scalar> im({cached_input_.extent(1), cached_input_.extent(2),
                         cached_input_.extent(3)});
      Tensor<Scalar> g(im.shape());
      std::copy(cached_input_.begin() + i * img, cached_input_.begin() + (i + 1) * img,
                im.begin());
      std::copy(grad_out.begin() + i * img, grad_out.begin() + (i + 1) * img, g.begin());
      Tensor<Scalar> gi = lrn_backward(im, g, p_);
      std::copy(gi.begin(), gi.end(), grad_input.begin() + i * img);
    });
    return grad_input;
  }

  const LrnParams& params_lrn() const { return p_; }

private:
  LrnParams p_;
  Tensor<Scalar> cached_input_;
};

template <typename Scalar>
class FlattenLayer final : public Layer<Scalar> {
public:
  explicit FlattenLayer(std::string name = "flatten") : Layer<Scalar>(std::move(name)) {}

  const char* kind() const override { return "flatten"; }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    auto s = detail::image_shape(in, "flatten");
    return {s[0] * s[1] * s[2]};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    x.require_rank(4);
    const int n = x.extent(0);
    if (mode == Mode::train) {
      in_shape_ = x.shape();
      this->note_train_forward();
    }
    return x.reshaped({n, static_cast<int>(x.size() / n)});
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    this->require_train_forward();
    return grad_out.reshaped(in_shape_);
  }

private:
  std::vector<int> in_shape_;
};

template <typename Scalar>
class FcLayer final : public Layer<Scalar> {
public:
  FcLayer(std::string name, int in_features, int out_features)
      : Layer<Scalar>(std::move(name)), in_(in_features), out_(out_features) {
    if (in_features < 1 || out_features < 1)
      throw std::invalid_argument("fc: feature counts must be positive");
    weight_ = Tensor<Scalar>({in_features, out_features});
    bias_ = Tensor<Scalar>({out_features});
  }

  const char* kind() const override { return "fc"; }

  void init_params(SeededRng& rng) {
    weight_ = glorot_uniform<Scalar>(in_, out_, weight_.shape(), rng);
    bias_.fill(Scalar(0));
  }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    if (in.size() != 1 || in[0] != in_)
      throw InvalidArchitectureError("fc '" + this->name_ + "': expected flat " +
                                     std::to_string(in_) + " features, got " +
                                     shape_to_string(in));
    return {out_};
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode) override {
    x.require_rank(2);
    if (x.extent(1) != in_)
      throw std::invalid_argument("fc '" + this->name_ + "': input features " +
                                  std::to_string(x.extent(1)) + " != " + std::to_string(in_));
    Tensor<Scalar> out({x.extent(0), out_});
    out.as_matrix().noalias() = x.as_matrix() * weight_.as_matrix();
    out.as_matrix().rowwise() += ConstMatrixMap<Scalar>(bias_.data(), 1, out_).row(0);
    if (mode == Mode::train) {
      cached_input_ = x;
      this->note_train_forward();
    }
    return out;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override {
    this->require_train_forward();
    grad_out.require_rank(2);
    if (grad_out.extent(0) != cached_input_.extent(0) || grad_out.extent(1) != out_)
      throw std::invalid_argument("fc backward: grad shape mismatch");
    grad_weight_ = Tensor<Scalar>(weight_.shape());
    grad_weight_.as_matrix().noalias() =
        cached_input_.as_matrix().transpose() * grad_out.as_matrix();
    // summed in fixed row order; Eigen's redux order varies with buffer address
    grad_bias_ = Tensor<Scalar>(bias_.shape());
    Scalar* bias_grad = grad_bias_.data();
    const Scalar* go = grad_out.data();
    const int n = grad_out.extent(0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_; ++j) bias_grad[j] += go[i * out_ + j];
    Tensor<Scalar> grad_input(cached_input_.shape());
    grad_input.as_matrix().noalias() = grad_out.as_matrix() * weight_.as_matrix().transpose();
    return grad_input;
  }

  std::vector<ParamRef<Scalar>> params() override {
    return {{this->name_ + ".weight", &weight_, &grad_weight_, this->trainable},
            {this->name_ + ".bias", &bias_, &grad_bias_, this->trainable}};
  }

  Tensor<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

private:
  int in_, out_;
  Tensor<Scalar> weight_, bias_;
  Tensor<Scalar> grad_weight_, grad_bias_;
  Tensor<Scalar> cached_input_;
};

template <typename Scalar>
struct SoftmaxXentResult {
  double loss = 0.0;        // mean over the batch
  Tensor<Scalar> probs;     // N x K softmax rows
};

// Loss is computed as logsumexp(z) - z[label], which stays finite for any
// logit magnitude even when the softmax itself underflows.
template <typename Scalar>
SoftmaxXentResult<Scalar> softmax_xent_forward(const Tensor<Scalar>& logits,
                                               const std::vector<int>& labels) {
  logits.require_rank(2);
  const int n = logits.extent(0), k = logits.extent(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("softmax_xent: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  SoftmaxXentResult<Scalar> r;
  r.probs = Tensor<Scalar>({n, k});
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= k)
      throw std::invalid_argument("softmax_xent: label " +
                                  std::to_string(labels[static_cast<std::size_t>(i)]) +
                                  " out of range [0," + std::to_string(k) + ")");
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.at(i, j)));
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(logits.at(i, j)) - mx);
    for (int j = 0; j < k; ++j)
      r.probs.at(i, j) =
          static_cast<Scalar>(std::exp(static_cast<double>(logits.at(i, j)) - mx) / sum);
    total += (mx + std::log(sum)) -
             static_cast<double>(logits.at(i, labels[static_cast<std::size_t>(i)]));
  }
  r.loss = total / n;
  return r;
}

// d loss / d logits = (probs - onehot(labels)) / N.
template <typename Scalar>
Tensor<Scalar> softmax_xent_backward(const Tensor<Scalar>& probs, const std::vector<int>& labels) {
  probs.require_rank(2);
  const int n = probs.extent(0), k = probs.extent(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("softmax_xent_backward: label count mismatch");
  Tensor<Scalar> g = probs;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw std::invalid_argument("softmax_xent_backward: label out of range");
    g.at(i, y) -= Scalar(1);
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  for (auto& v : g) v *= inv_n;
  return g;
}

}  // namespace covidnn
