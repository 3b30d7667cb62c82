#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "covidnn/layers.hpp"
#include "covidnn/rng.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

// Central difference (f(x+h) - f(x-h)) / 2h per element. f must be a pure
// function of x.
template <typename F>
Tensor<double> finite_difference_grad(F&& f, const Tensor<double>& x, double step) {
  if (!(step > 0)) throw std::invalid_argument("finite_difference_grad: step must be positive");
  Tensor<double> g(x.shape());
  Tensor<double> probe = x;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double fp = f(probe);
    probe[i] = x[i] - step;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const Tensor<double>& a, const Tensor<double>& b,
                                 double floor = 1e-6) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

struct GradCheckCase {
  std::string layer;
  std::string tensor;  // "input" or a parameter name
  std::uint64_t seed = 0;
  double max_err = 0.0;
  bool pass = false;
};

namespace detail {

inline Tensor<double> random_tensor(std::vector<int> shape, SeededRng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t) v = rng.uniform(lo, hi);
  return t;
}

// Keeps every element away from the ReLU kink so the central difference
// never straddles it.
inline Tensor<double> random_tensor_off_zero(std::vector<int> shape, SeededRng& rng,
                                             double margin) {
  Tensor<double> t = random_tensor(std::move(shape), rng);
  for (auto& v : t) {
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
  return t;
}

// Regenerates until every pooling window has a clear winner, so the FD probe
// cannot flip an argmax.
inline Tensor<double> random_pool_input(std::vector<int> shape, int window, int stride,
                                        SeededRng& rng, double margin) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Tensor<double> t = random_tensor(shape, rng);
    auto r = maxpool_forward(t, window, stride);
    bool ok = true;
    const int h = shape[0], w = shape[1], c = shape[2];
    const int oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
    for (int oy = 0; oy < oh && ok; ++oy)
      for (int ox = 0; ox < ow && ok; ++ox)
        for (int ch = 0; ch < c && ok; ++ch) {
          const std::int64_t o = (static_cast<std::int64_t>(oy) * ow + ox) * c + ch;
          const double best = r.output[o];
          for (int ky = 0; ky < window && ok; ++ky)
            for (int kx = 0; kx < window && ok; ++kx) {
              const std::int64_t idx =
                  (static_cast<std::int64_t>(oy * stride + ky) * w + (ox * stride + kx)) * c + ch;
              if (idx != r.argmax[static_cast<std::size_t>(o)] && best - t[idx] < margin)
                ok = false;
            }
        }
    if (ok) return t;
  }
  throw std::runtime_error("random_pool_input: could not generate tie-free input");
}

// Scalar objective sum(w . layer(x)) with a fixed random projection w; its
// input gradient is layer.backward(w).
template <typename MakeLayer>
void check_layer_grads(const std::string& label, std::vector<int> in_shape, MakeLayer&& make,
                       std::uint64_t seed, double step, double tol,
                       std::vector<GradCheckCase>& out, bool off_zero_input = false) {
  SeededRng rng(seed);
  Tensor<double> x = off_zero_input ? random_tensor_off_zero(in_shape, rng, 1e-2)
                                    : random_tensor(in_shape, rng);
  auto layer = make(rng);
  Tensor<double> y0 = layer->forward(x, Mode::train);
  Tensor<double> w = random_tensor(y0.shape(), rng);

  auto objective_at = [&](const Tensor<double>& probe) {
    Tensor<double> y = layer->forward(probe, Mode::train);
    double s = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
  };

  // Analytic gradients for input and every trainable parameter.
  layer->forward(x, Mode::train);
  Tensor<double> analytic_input = layer->backward(w);
  struct ParamGrad {
    std::string name;
    Tensor<double> grad;
  };
  std::vector<ParamGrad> param_grads;
  for (auto& p : layer->params())
    if (p.trainable) param_grads.push_back({p.name, *p.grad});

  {
    Tensor<double> numeric = finite_difference_grad(objective_at, x, step);
    GradCheckCase c{label, "input", seed, max_relative_error(analytic_input, numeric), false};
    c.pass = c.max_err < tol;
    out.push_back(c);
  }

  for (auto& pg : param_grads) {
    Tensor<double>* target = nullptr;
    for (auto& p : layer->params())
      if (p.name == pg.name) target = p.value;
    Tensor<double> saved = *target;
    auto param_objective = [&](const Tensor<double>& probe) {
      *target = probe;
      Tensor<double> y = layer->forward(x, Mode::train);
      double s = 0.0;
      for (std::int64_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
      return s;
    };
    Tensor<double> numeric = finite_difference_grad(param_objective, saved, step);
    *target = saved;
    GradCheckCase c{label, pg.name, seed, max_relative_error(pg.grad, numeric), false};
    c.pass = c.max_err < tol;
    out.push_back(c);
  }
}

}  // namespace detail

// Checks every layer kind's analytic backward against central differences in
// double precision. Returns one case per (layer, tensor, seed).
inline std::vector<GradCheckCase> run_layer_gradchecks(int num_seeds, double step = 1e-5,
                                                       double tol = 1e-4) {
  if (num_seeds < 1) throw std::invalid_argument("run_layer_gradchecks: num_seeds must be >= 1");
  std::vector<GradCheckCase> cases;
  for (int s = 0; s < num_seeds; ++s) {
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);

    detail::check_layer_grads(
        "conv(same,s1)", {1, 5, 5, 2},
        [](SeededRng& rng) {
          auto l = std::make_unique<Conv2dLayer<double>>("conv", 2, 3, 3, 1, Padding::same);
          l->init_params(rng);
          return l;
        },
        seed, step, tol, cases);

    detail::check_layer_grads(
        "conv(valid,s2)", {1, 7, 7, 2},
        [](SeededRng& rng) {
          auto l = std::make_unique<Conv2dLayer<double>>("conv", 2, 4, 3, 2, Padding::valid);
          l->init_params(rng);
          return l;
        },
        seed, step, tol, cases);

    detail::check_layer_grads(
        "conv(groups=2)", {1, 6, 6, 4},
        [](SeededRng& rng) {
          auto l = std::make_unique<Conv2dLayer<double>>("conv", 4, 4, 3, 1, Padding::explicit_pad,
                                                         1, 2);
          l->init_params(rng);
          return l;
        },
        seed, step, tol, cases);

    detail::check_layer_grads(
        "batchnorm", {4, 3, 3, 2},
        [](SeededRng& rng) {
          auto l = std::make_unique<BatchNormLayer<double>>("bn", 2);
          auto ps = l->params();
          for (auto& v : *ps[0].value) v = rng.uniform(0.5, 1.5);   // gamma
          for (auto& v : *ps[1].value) v = rng.uniform(-0.5, 0.5);  // beta
          return l;
        },
        seed, step, tol, cases);

    detail::check_layer_grads(
        "relu", {2, 4, 4, 3},
        [](SeededRng&) { return std::make_unique<ReluLayer<double>>(); }, seed, step, tol, cases,
        /*off_zero_input=*/true);

    {
      // Maxpool input needs tie-free windows; build it outside the helper.
      SeededRng rng(seed);
      Tensor<double> img = detail::random_pool_input({6, 6, 3}, 3, 2, rng, 1e-3);
      Tensor<double> x({1, 6, 6, 3}, img.values());
      MaxPoolLayer<double> pool("pool", 3, 2);
      Tensor<double> y0 = pool.forward(x, Mode::train);
      Tensor<double> w = detail::random_tensor(y0.shape(), rng);
      pool.forward(x, Mode::train);
      Tensor<double> analytic = pool.backward(w);
      auto objective = [&](const Tensor<double>& probe) {
        Tensor<double> y = pool.forward(probe, Mode::train);
        double s = 0.0;
        for (std::int64_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
        return s;
      };
      Tensor<double> numeric = finite_difference_grad(objective, x, step);
      GradCheckCase c{"maxpool", "input", seed, max_relative_error(analytic, numeric), false};
      c.pass = c.max_err < tol;
      cases.push_back(c);
    }

    detail::check_layer_grads(
        "lrn", {1, 4, 4, 8},
        [](SeededRng&) {
          return std::make_unique<LrnLayer<double>>("lrn", LrnParams{2.0, 5, 1e-4, 0.75});
        },
        seed, step, tol, cases);

    detail::check_layer_grads(
        "fc", {3, 4},
        [](SeededRng& rng) {
          auto l = std::make_unique<FcLayer<double>>("fc", 4, 5);
          l->init_params(rng);
          return l;
        },
        seed, step, tol, cases);

    {
      // Cross-entropy checked directly on its scalar loss.
      SeededRng rng(seed);
      Tensor<double> logits = detail::random_tensor({5, 2}, rng, -2.0, 2.0);
      std::vector<int> labels(5);
      for (auto& l : labels) l = static_cast<int>(rng.next_below(2));
      auto loss_at = [&](const Tensor<double>& probe) {
        return softmax_xent_forward(probe, labels).loss;
      };
      auto fwd = softmax_xent_forward(logits, labels);
      Tensor<double> analytic = softmax_xent_backward(fwd.probs, labels);
      Tensor<double> numeric = finite_difference_grad(loss_at, logits, step);
      GradCheckCase c{"softmax_xent", "logits", seed, max_relative_error(analytic, numeric),
                      false};
      c.pass = c.max_err < tol;
      cases.push_back(c);
    }
  }
  return cases;
}

}  // namespace covidnn
