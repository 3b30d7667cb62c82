#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "covidnn/errors.hpp"
#include "covidnn/layers.hpp"
#include "covidnn/rng.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

using ordered_json = nlohmann::ordered_json;

enum class LayerKind { conv, batchnorm, relu, maxpool, lrn, fc, flatten, softmax_xent };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::lrn: return "lrn";
    case LayerKind::fc: return "fc";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax_xent: return "softmax_xent";
  }
  return "unknown";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "batchnorm") return LayerKind::batchnorm;
  if (s == "relu") return LayerKind::relu;
  if (s == "maxpool") return LayerKind::maxpool;
  if (s == "lrn") return LayerKind::lrn;
  if (s == "fc") return LayerKind::fc;
  if (s == "flatten") return LayerKind::flatten;
  if (s == "softmax_xent") return LayerKind::softmax_xent;
  throw ConfigError("unknown layer kind '" + s + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;

  // conv
  int in_channels = 0, filters = 0, kernel = 0, stride = 1, groups = 1;
  std::string padding = "same";  // same | valid | explicit
  int pad = 0;

  // batchnorm
  int channels = 0;

  // maxpool (stride shared with conv field)
  int window = 0;

  // lrn
  LrnParams lrn;

  // fc
  int in_features = 0, units = 0;

  static LayerSpec make_conv(std::string name, int in_channels, int filters, int kernel,
                             int stride, std::string padding, int pad = 0, int groups = 1) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.name = std::move(name);
    s.in_channels = in_channels;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = std::move(padding);
    s.pad = pad;
    s.groups = groups;
    return s;
  }

  static LayerSpec make_batchnorm(std::string name, int channels) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm;
    s.name = std::move(name);
    s.channels = channels;
    return s;
  }

  static LayerSpec make_relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
  }

  static LayerSpec make_maxpool(int window, int stride) {
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    s.window = window;
    s.stride = stride;
    return s;
  }

  static LayerSpec make_lrn(LrnParams p) {
    LayerSpec s;
    s.kind = LayerKind::lrn;
    s.lrn = p;
    return s;
  }

  static LayerSpec make_flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
  }

  static LayerSpec make_fc(std::string name, int in_features, int units) {
    LayerSpec s;
    s.kind = LayerKind::fc;
    s.name = std::move(name);
    s.in_features = in_features;
    s.units = units;
    return s;
  }

  static LayerSpec make_softmax_xent() {
    LayerSpec s;
    s.kind = LayerKind::softmax_xent;
    return s;
  }

  ordered_json to_json() const {
    ordered_json j;
    j["kind"] = to_string(kind);
    if (!name.empty()) j["name"] = name;
    switch (kind) {
      case LayerKind::conv:
        j["in_channels"] = in_channels;
        j["filters"] = filters;
        j["kernel"] = kernel;
        j["stride"] = stride;
        j["padding"] = padding;
        if (padding == "explicit") j["pad"] = pad;
        if (groups != 1) j["groups"] = groups;
        break;
      case LayerKind::batchnorm:
        j["channels"] = channels;
        break;
      case LayerKind::maxpool:
        j["window"] = window;
        j["stride"] = stride;
        break;
      case LayerKind::lrn:
        j["k"] = lrn.k;
        j["n"] = lrn.n;
        j["alpha"] = lrn.alpha;
        j["beta"] = lrn.beta;
        break;
      case LayerKind::fc:
        j["in_features"] = in_features;
        j["units"] = units;
        break;
      default:
        break;
    }
    return j;
  }

  static LayerSpec from_json(const ordered_json& j) {
    LayerSpec s;
    s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    s.name = j.value("name", std::string());
    switch (s.kind) {
      case LayerKind::conv:
        s.in_channels = j.at("in_channels").get<int>();
        s.filters = j.at("filters").get<int>();
        s.kernel = j.at("kernel").get<int>();
        s.stride = j.at("stride").get<int>();
        s.padding = j.at("padding").get<std::string>();
        s.pad = j.value("pad", 0);
        s.groups = j.value("groups", 1);
        break;
      case LayerKind::batchnorm:
        s.channels = j.at("channels").get<int>();
        break;
      case LayerKind::maxpool:
        s.window = j.at("window").get<int>();
        s.stride = j.at("stride").get<int>();
        break;
      case LayerKind::lrn:
        s.lrn.k = j.at("k").get<double>();
        s.lrn.n = j.at("n").get<int>();
        s.lrn.alpha = j.at("alpha").get<double>();
        s.lrn.beta = j.at("beta").get<double>();
        break;
      case LayerKind::fc:
        s.in_features = j.at("in_features").get<int>();
        s.units = j.at("units").get<int>();
        break;
      default:
        break;
    }
    return s;
  }
};

inline Padding padding_from_string(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  if (s == "explicit") return Padding::explicit_pad;
  throw ConfigError("unknown padding '" + s + "'");
}

struct ModelSpec {
  std::string name;
  std::array<int, 3> input_shape{0, 0, 0};  // H, W, C
  int num_classes = 2;
  std::vector<LayerSpec> layers;

  ordered_json to_json() const {
    ordered_json j;
    j["name"] = name;
    j["input_shape"] = input_shape;
    j["num_classes"] = num_classes;
    j["layers"] = ordered_json::array();
    for (const auto& l : layers) j["layers"].push_back(l.to_json());
    return j;
  }

  static ModelSpec from_json(const ordered_json& j) {
    ModelSpec s;
    s.name = j.at("name").get<std::string>();
    auto in = j.at("input_shape");
    if (!in.is_array() || in.size() != 3) throw ConfigError("input_shape must have 3 extents");
    for (int i = 0; i < 3; ++i) s.input_shape[static_cast<std::size_t>(i)] = in[i].get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    for (const auto& lj : j.at("layers")) s.layers.push_back(LayerSpec::from_json(lj));
    return s;
  }
};

// Walks the layer chain symbolically and throws InvalidArchitectureError on
// the first shape that does not fit. Returns the final logits width.
inline int validate_spec(const ModelSpec& spec) {
  for (int e : spec.input_shape)
    if (e < 1) throw InvalidArchitectureError("model '" + spec.name + "': bad input shape");
  if (spec.num_classes < 2)
    throw InvalidArchitectureError("model '" + spec.name + "': num_classes must be >= 2");
  if (spec.layers.empty())
    throw InvalidArchitectureError("model '" + spec.name + "': no layers");

  std::vector<int> cur{spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]};
  bool flat = false;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    const std::string where =
        "model '" + spec.name + "' layer " + std::to_string(li) + " (" + to_string(l.kind) + ")";
    const bool is_last = li + 1 == spec.layers.size();
    switch (l.kind) {
      case LayerKind::conv: {
        if (flat) throw InvalidArchitectureError(where + ": conv after flatten");
        if (cur[2] != l.in_channels)
          throw InvalidArchitectureError(where + ": expects " + std::to_string(l.in_channels) +
                                         " channels, gets " + std::to_string(cur[2]));
        if (l.groups < 1 || l.in_channels % l.groups || l.filters % l.groups)
          throw InvalidArchitectureError(where + ": groups must divide channels and filters");
        Conv2dGeom g{l.stride, padding_from_string(l.padding), l.pad};
        Conv2dDims d = conv2d_dims(cur[0], cur[1], l.kernel, g);
        cur = {d.out_h, d.out_w, l.filters};
        break;
      }
      case LayerKind::batchnorm:
        if (flat || cur[2] != l.channels)
          throw InvalidArchitectureError(where + ": channel mismatch");
        break;
      case LayerKind::relu:
        break;
      case LayerKind::maxpool: {
        if (flat) throw InvalidArchitectureError(where + ": maxpool after flatten");
        if (l.window > cur[0] || l.window > cur[1])
          throw InvalidArchitectureError(where + ": window does not fit " + shape_to_string(cur));
        cur = {(cur[0] - l.window) / l.stride + 1, (cur[1] - l.window) / l.stride + 1, cur[2]};
        break;
      }
      case LayerKind::lrn:
        if (flat) throw InvalidArchitectureError(where + ": lrn after flatten");
        break;
      case LayerKind::flatten:
        if (flat) throw InvalidArchitectureError(where + ": input already flat");
        cur = {cur[0] * cur[1] * cur[2]};
        flat = true;
        break;
      case LayerKind::fc:
        if (!flat) throw InvalidArchitectureError(where + ": fc requires flattened input");
        if (cur[0] != l.in_features)
          throw InvalidArchitectureError(where + ": expects " + std::to_string(l.in_features) +
                                         " features, gets " + std::to_string(cur[0]));
        cur = {l.units};
        break;
      case LayerKind::softmax_xent:
        if (!is_last)
          throw InvalidArchitectureError(where + ": softmax_xent must be the final layer");
        if (!flat || cur[0] != spec.num_classes)
          throw InvalidArchitectureError(where + ": logits width " + shape_to_string(cur) +
                                         " != num_classes " + std::to_string(spec.num_classes));
        break;
    }
  }
  if (!flat || cur.size() != 1)
    throw InvalidArchitectureError("model '" + spec.name + "': output is not a logit vector");
  if (cur[0] != spec.num_classes)
    throw InvalidArchitectureError("model '" + spec.name + "': logits width " +
                                   std::to_string(cur[0]) + " != num_classes " +
                                   std::to_string(spec.num_classes));
  return cur[0];
}

ModelSpec replace_last_layers(ModelSpec spec, int num_classes);

// Name and shape of every persistent tensor, in serialization order.
inline std::vector<std::pair<std::string, std::vector<int>>> spec_param_table(
    const ModelSpec& spec) {
  validate_spec(spec);
  std::vector<std::pair<std::string, std::vector<int>>> table;
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::conv:
        table.emplace_back(l.name + ".weight",
                           std::vector<int>{l.kernel, l.kernel, l.in_channels / l.groups,
                                            l.filters});
        table.emplace_back(l.name + ".bias", std::vector<int>{l.filters});
        break;
      case LayerKind::batchnorm:
        table.emplace_back(l.name + ".gamma", std::vector<int>{l.channels});
        table.emplace_back(l.name + ".beta", std::vector<int>{l.channels});
        table.emplace_back(l.name + ".running_mean", std::vector<int>{l.channels});
        table.emplace_back(l.name + ".running_var", std::vector<int>{l.channels});
        break;
      case LayerKind::fc:
        table.emplace_back(l.name + ".weight", std::vector<int>{l.in_features, l.units});
        table.emplace_back(l.name + ".bias", std::vector<int>{l.units});
        break;
      default:
        break;
    }
  }
  return table;
}

// Runnable network. The trailing softmax_xent spec entry is the loss head:
// forward_logits stops before it, and training applies the loss functions to
// the logits directly.
template <typename Scalar>
class Network {
public:
  Network(ModelSpec spec, SeededRng& rng) : spec_(std::move(spec)) {
    validate_spec(spec_);
    build(rng);
  }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<std::unique_ptr<Layer<Scalar>>>& layers() { return layers_; }

  std::vector<int> input_shape() const {
    return {spec_.input_shape[0], spec_.input_shape[1], spec_.input_shape[2]};
  }

  // batch: N x H x W x C. Returns N x num_logits.
  Tensor<Scalar> forward_logits(const Tensor<Scalar>& batch, Mode mode) {
    check_input(batch);
    Tensor<Scalar> x = batch;
    for (auto& l : layers_) x = l->forward(x, mode);
    return x;
  }

  // grad w.r.t. logits, propagated to the input gradient.
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_logits) {
    Tensor<Scalar> g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  Tensor<Scalar> predict_proba(const Tensor<Scalar>& batch, Mode mode = Mode::infer) {
    Tensor<Scalar> logits = forward_logits(batch, mode);
    const int n = logits.extent(0), k = logits.extent(1);
    Tensor<Scalar> probs({n, k});
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(logits.at(i, j)));
      double sum = 0.0;
      for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(logits.at(i, j)) - mx);
      for (int j = 0; j < k; ++j)
        probs.at(i, j) =
            static_cast<Scalar>(std::exp(static_cast<double>(logits.at(i, j)) - mx) / sum);
    }
    return probs;
  }

  std::vector<ParamRef<Scalar>> params() {
    std::vector<ParamRef<Scalar>> all;
    for (auto& l : layers_)
      for (auto& p : l->params()) all.push_back(p);
    return all;
  }

  // Marks batchnorm statistics as valid; called after loading an archive.
  void on_weights_loaded() {
    for (auto& l : layers_)
      if (auto* bn = dynamic_cast<BatchNormLayer<Scalar>*>(l.get())) bn->mark_stats_initialized();
  }

  // Freezes every layer up to and including the named one.
  void freeze_up_to(const std::string& layer_name) {
    bool found = false;
    for (auto& l : layers_) {
      l->trainable = false;
      if (l->name() == layer_name) {
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError("freeze_up_to: no layer named '" + layer_name + "'");
  }

  // Swaps the final fc for a fresh glorot-initialized num_classes head and
  // appends a softmax_xent loss. Every other parameter is left untouched.
  void replace_last_layers(int num_classes, SeededRng& rng) {
    spec_ = covidnn::replace_last_layers(spec_, num_classes);
    const LayerSpec& head = spec_.layers[spec_.layers.size() - 2];
    auto fc = std::make_unique<FcLayer<Scalar>>(head.name, head.in_features, head.units);
    fc->init_params(rng);
    layers_.pop_back();
    layers_.push_back(std::move(fc));
  }

private:
  void check_input(const Tensor<Scalar>& batch) const {
    if (batch.rank() != 4 || batch.extent(1) != spec_.input_shape[0] ||
        batch.extent(2) != spec_.input_shape[1] || batch.extent(3) != spec_.input_shape[2])
      throw std::invalid_argument("network '" + spec_.name + "': expected N x " +
                                  std::to_string(spec_.input_shape[0]) + " x " +
                                  std::to_string(spec_.input_shape[1]) + " x " +
                                  std::to_string(spec_.input_shape[2]) + " input, got " +
                                  shape_to_string(batch.shape()));
  }

  void build(SeededRng& rng) {
    layers_.clear();
    for (const auto& l : spec_.layers) {
      switch (l.kind) {
        case LayerKind::conv: {
          auto layer = std::make_unique<Conv2dLayer<Scalar>>(
              l.name, l.in_channels, l.filters, l.kernel, l.stride,
              padding_from_string(l.padding), l.pad, l.groups);
          layer->init_params(rng);
          layers_.push_back(std::move(layer));
          break;
        }
        case LayerKind::batchnorm:
          layers_.push_back(std::make_unique<BatchNormLayer<Scalar>>(l.name, l.channels));
          break;
        case LayerKind::relu:
          layers_.push_back(std::make_unique<ReluLayer<Scalar>>());
          break;
        case LayerKind::maxpool:
          layers_.push_back(std::make_unique<MaxPoolLayer<Scalar>>("maxpool", l.window, l.stride));
          break;
        case LayerKind::lrn:
          layers_.push_back(std::make_unique<LrnLayer<Scalar>>("lrn", l.lrn));
          break;
        case LayerKind::flatten:
          layers_.push_back(std::make_unique<FlattenLayer<Scalar>>());
          break;
        case LayerKind::fc: {
          auto layer = std::make_unique<FcLayer<Scalar>>(l.name, l.in_features, l.units);
          layer->init_params(rng);
          layers_.push_back(std::move(layer));
          break;
        }
        case LayerKind::softmax_xent:
          break;  // loss head, applied outside the layer chain
      }
    }
  }

  ModelSpec spec_;
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

// Spec-level surgery: the chain must end in an fc layer (optionally already
// followed by softmax_xent is NOT accepted; the head being replaced is the
// trailing fc). The new head keeps the old layer's name.
inline ModelSpec replace_last_layers(ModelSpec spec, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("replace_last_layers: num_classes must be >= 2");
  if (spec.layers.empty() || spec.layers.back().kind != LayerKind::fc)
    throw InvalidArchitectureError("replace_last_layers: model '" + spec.name +
                                   "' does not end in an fc layer");
  LayerSpec old = spec.layers.back();
  spec.layers.pop_back();
  spec.layers.push_back(LayerSpec::make_fc(old.name, old.in_features, num_classes));
  spec.layers.push_back(LayerSpec::make_softmax_xent());
  spec.num_classes = num_classes;
  validate_spec(spec);
  return spec;
}

// 224 x 224 x 3 -> conv(16 @ 5x5, stride 1, same) -> batchnorm -> relu ->
// flatten -> fc(hidden) -> fc(2) -> softmax. fc_hidden widens or narrows the
// penultimate layer; 32 is the default working width.
inline ModelSpec build_proposed_cnn(int fc_hidden = 32) {
  if (fc_hidden < 2) throw std::invalid_argument("build_proposed_cnn: fc_hidden must be >= 2");
  ModelSpec s;
  s.name = "proposed_cnn";
  s.input_shape = {224, 224, 3};
  s.num_classes = 2;
  s.layers.push_back(LayerSpec::make_conv("conv1", 3, 16, 5, 1, "same"));
  s.layers.push_back(LayerSpec::make_batchnorm("bn1", 16));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_flatten());
  s.layers.push_back(LayerSpec::make_fc("fc1", 224 * 224 * 16, fc_hidden));
  s.layers.push_back(LayerSpec::make_fc("fc2", fc_hidden, 2));
  s.layers.push_back(LayerSpec::make_softmax_xent());
  validate_spec(s);
  return s;
}

// Krizhevsky et al. 2012 topology with the two-tower split expressed as
// grouped convolutions; 227 x 227 x 3 input, 1000-way logits.
inline ModelSpec build_alexnet() {
  ModelSpec s;
  s.name = "alexnet";
  s.input_shape = {227, 227, 3};
  s.num_classes = 1000;
  const LrnParams lrn{2.0, 5, 1e-4, 0.75};
  s.layers.push_back(LayerSpec::make_conv("conv1", 3, 96, 11, 4, "valid"));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_lrn(lrn));
  s.layers.push_back(LayerSpec::make_maxpool(3, 2));
  s.layers.push_back(LayerSpec::make_conv("conv2", 96, 256, 5, 1, "explicit", 2, 2));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_lrn(lrn));
  s.layers.push_back(LayerSpec::make_maxpool(3, 2));
  s.layers.push_back(LayerSpec::make_conv("conv3", 256, 384, 3, 1, "explicit", 1));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_conv("conv4", 384, 384, 3, 1, "explicit", 1, 2));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_conv("conv5", 384, 256, 3, 1, "explicit", 1, 2));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_maxpool(3, 2));
  s.layers.push_back(LayerSpec::make_flatten());
  s.layers.push_back(LayerSpec::make_fc("fc6", 6 * 6 * 256, 4096));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_fc("fc7", 4096, 4096));
  s.layers.push_back(LayerSpec::make_relu());
  s.layers.push_back(LayerSpec::make_fc("fc8", 4096, 1000));
  validate_spec(s);
  return s;
}

}  // namespace covidnn
