#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "covidnn/errors.hpp"
#include "covidnn/metrics.hpp"
#include "covidnn/model.hpp"
#include "covidnn/rng.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

struct TrainConfig {
  int mini_batch_size = 10;
  int epochs = 20;
  double learning_rate = 3e-4;
  int validation_frequency_iters = 3;
  bool shuffle_each_epoch = true;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  int num_runs = 10;

  void validate() const {
    if (mini_batch_size < 1) throw ConfigError("mini_batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (validation_frequency_iters < 1)
      throw ConfigError("validation_frequency_iters must be >= 1");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must be in [0, 1)");
    if (num_runs < 1) throw ConfigError("num_runs must be >= 1");
  }
};

// v <- momentum * v - lr * grad;  param <- param + v
template <typename Scalar>
void sgd_step(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Scalar lr, Scalar momentum,
              Tensor<Scalar>& velocity) {
  if (grad.shape() != param.shape())
    throw std::invalid_argument("sgd_step: grad shape " + shape_to_string(grad.shape()) +
                                " != param shape " + shape_to_string(param.shape()));
  if (velocity.empty()) velocity = Tensor<Scalar>(param.shape());
  if (velocity.shape() != param.shape())
    throw std::invalid_argument("sgd_step: velocity shape mismatch");
  Scalar* v = velocity.data();
  Scalar* p = param.data();
  const Scalar* g = grad.data();
  for (std::int64_t i = 0; i < param.size(); ++i) {
    v[i] = momentum * v[i] - lr * g[i];
    p[i] += v[i];
  }
}

// Per-parameter velocity slots keyed by position in the registry.
template <typename Scalar>
class SgdOptimizer {
public:
  SgdOptimizer(Scalar lr, Scalar momentum) : lr_(lr), momentum_(momentum) {}

  void step(const std::vector<ParamRef<Scalar>>& params) {
    if (velocity_.empty()) velocity_.resize(params.size());
    if (velocity_.size() != params.size())
      throw std::invalid_argument("SgdOptimizer: parameter registry size changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].trainable) continue;
      sgd_step(*params[i].value, *params[i].grad, lr_, momentum_, velocity_[i]);
    }
  }

private:
  Scalar lr_, momentum_;
  std::vector<Tensor<Scalar>> velocity_;
};

// In-memory split: one preprocessed H x W x C tensor per image.
struct SampleSet {
  std::vector<Tensor<float>> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

inline Tensor<float> assemble_batch(const SampleSet& set, const std::vector<std::size_t>& order,
                                    std::size_t begin, std::size_t end) {
  const auto& first = set.images[order[begin]];
  const int n = static_cast<int>(end - begin);
  Tensor<float> batch({n, first.extent(0), first.extent(1), first.extent(2)});
  const std::int64_t img = first.size();
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor<float>& src = set.images[order[i]];
    if (src.shape() != first.shape())
      throw DataError("assemble_batch: image shapes differ within a set");
    std::copy(src.begin(), src.end(),
              batch.begin() + static_cast<std::int64_t>(i - begin) * img);
  }
  return batch;
}

struct CurvePoint {
  int iteration = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainingCurve {
  std::vector<CurvePoint> points;

  std::string to_csv() const {
    std::string out = "iteration,train_loss,val_accuracy\n";
    for (const auto& p : points) {
      out += std::to_string(p.iteration) + "," + format_double(p.train_loss) + ",";
      if (p.val_accuracy) out += format_double(*p.val_accuracy);
      out += "\n";
    }
    return out;
  }

  static TrainingCurve from_csv(const std::string& text) {
    TrainingCurve c;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      if (line_no == 1) {
        if (line != "iteration,train_loss,val_accuracy")
          throw DataError("training curve: unexpected header '" + line + "'");
        continue;
      }
      if (line.empty()) continue;
      std::size_t c1 = line.find(',');
      std::size_t c2 = line.find(',', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos)
        throw DataError("training curve line " + std::to_string(line_no) + ": expected 3 fields");
      CurvePoint p;
      p.iteration = std::stoi(line.substr(0, c1));
      p.train_loss = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
      std::string val = line.substr(c2 + 1);
      if (!val.empty()) p.val_accuracy = std::stod(val);
      c.points.push_back(p);
    }
    return c;
  }
};

// Scores p(class 1) for every image, in order, infer mode.
inline std::vector<double> score_positive_probs(Network<float>& net, const SampleSet& set,
                                                int batch_size) {
  std::vector<double> probs;
  probs.reserve(set.size());
  std::vector<std::size_t> order(set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t b = 0; b < set.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(set.size(), b + static_cast<std::size_t>(batch_size));
    Tensor<float> batch = assemble_batch(set, order, b, e);
    Tensor<float> p = net.predict_proba(batch, Mode::infer);
    for (int i = 0; i < p.extent(0); ++i) probs.push_back(static_cast<double>(p.at(i, 1)));
  }
  return probs;
}

// Fraction of correct predictions with the positive-at-0.5 tie rule.
inline double accuracy_on(Network<float>& net, const SampleSet& set, int batch_size) {
  if (set.size() == 0) throw DataError("accuracy_on: empty set");
  std::vector<double> probs = score_positive_probs(net, set, batch_size);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const int pred = probs[i] >= 0.5 ? 1 : 0;
    if (pred == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

inline MetricsReport evaluate_set(Network<float>& net, const SampleSet& set, double threshold,
                                  const std::string& model, const std::string& modality,
                                  int batch_size = 10) {
  if (set.size() == 0) throw DataError("evaluate_set: empty evaluation set");
  return evaluate_scores(score_positive_probs(net, set, batch_size), set.labels, threshold, model,
                         modality);
}

// Minibatch SGD over the whole train set for cfg.epochs epochs. Indices are
// reshuffled before each epoch with the caller's rng; the final short batch
// of an epoch is kept. Iterations count from 1 across epochs and validation
// accuracy over the full val set is recorded at every
// validation_frequency_iters-th iteration. Throws NumericError if the loss
// leaves the finite range.
inline TrainingCurve train(Network<float>& net, const SampleSet& train_set,
                           const SampleSet& val_set, const TrainConfig& cfg, SeededRng& rng) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("train: empty training set");
  if (val_set.size() == 0) throw DataError("train: empty validation set");
  if (train_set.labels.size() != train_set.images.size())
    throw DataError("train: label count mismatch");

  SgdOptimizer<float> opt(static_cast<float>(cfg.learning_rate),
                          static_cast<float>(cfg.momentum));
  TrainingCurve curve;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  int iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle_each_epoch) rng.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.mini_batch_size)) {
      const std::size_t e =
          std::min(order.size(), b + static_cast<std::size_t>(cfg.mini_batch_size));
      Tensor<float> batch = assemble_batch(train_set, order, b, e);
      std::vector<int> labels;
      labels.reserve(e - b);
      for (std::size_t i = b; i < e; ++i) labels.push_back(train_set.labels[order[i]]);

      Tensor<float> logits = net.forward_logits(batch, Mode::train);
      auto loss = softmax_xent_forward(logits, labels);
      ++iter;
      if (!std::isfinite(loss.loss))
        throw NumericError("training diverged: non-finite loss at iteration " +
                           std::to_string(iter));
      net.backward(softmax_xent_backward(loss.probs, labels));
      opt.step(net.params());

      CurvePoint point;
      point.iteration = iter;
      point.train_loss = loss.loss;
      if (iter % cfg.validation_frequency_iters == 0)
        point.val_accuracy = accuracy_on(net, val_set, cfg.mini_batch_size);
      curve.points.push_back(point);
    }
  }
  return curve;
}

struct RunResult {
  int run_index = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  TrainingCurve curve;
};

struct MetricStats {
  std::optional<double> mean, stddev;
  int count = 0;  // runs where the metric was defined
};

struct MultirunAggregate {
  int num_runs = 0;
  MetricStats accuracy, sensitivity, specificity;

  nlohmann::ordered_json to_json() const {
    auto stats_json = [](const MetricStats& s) {
      nlohmann::ordered_json j;
      j["mean"] = s.mean ? nlohmann::ordered_json(*s.mean) : nlohmann::ordered_json(nullptr);
      j["stddev"] = s.stddev ? nlohmann::ordered_json(*s.stddev) : nlohmann::ordered_json(nullptr);
      j["count"] = s.count;
      return j;
    };
    nlohmann::ordered_json j;
    j["num_runs"] = num_runs;
    j["accuracy"] = stats_json(accuracy);
    j["sensitivity"] = stats_json(sensitivity);
    j["specificity"] = stats_json(specificity);
    return j;
  }
};

namespace detail {

inline MetricStats aggregate_metric(const std::vector<RunResult>& runs,
                                    std::optional<double> MetricsReport::* member) {
  MetricStats s;
  double sum = 0.0;
  for (const auto& r : runs)
    if (r.metrics.*member) {
      sum += *(r.metrics.*member);
      ++s.count;
    }
  if (s.count == 0) return s;
  const double mean = sum / s.count;
  double sq = 0.0;
  for (const auto& r : runs)
    if (r.metrics.*member) sq += (*(r.metrics.*member) - mean) * (*(r.metrics.*member) - mean);
  s.mean = mean;
  s.stddev = std::sqrt(sq / s.count);  // population, so one run gives 0
  return s;
}

}  // namespace detail

// Repeats build + train + evaluate num_runs times with seeds seed, seed+1, ...
// Each run's rng drives that run's weight init and epoch shuffles. eval_set
// is scored after training; runs are aggregated by run index.
inline std::pair<std::vector<RunResult>, MultirunAggregate> multirun(
    const std::function<Network<float>(SeededRng&)>& builder, const SampleSet& train_set,
    const SampleSet& val_set, const SampleSet& eval_set, const TrainConfig& cfg, double threshold,
    const std::string& model_name, const std::string& modality) {
  cfg.validate();
  if (eval_set.size() == 0) throw DataError("multirun: empty evaluation set");

  std::vector<RunResult> runs;
  for (int i = 0; i < cfg.num_runs; ++i) {
    RunResult r;
    r.run_index = i;
    r.seed = cfg.seed + static_cast<std::uint64_t>(i);
    SeededRng rng(r.seed);
    Network<float> net = builder(rng);
    r.curve = train(net, train_set, val_set, cfg, rng);
    r.metrics = evaluate_set(net, eval_set, threshold, model_name, modality, cfg.mini_batch_size);
    runs.push_back(std::move(r));
  }

  MultirunAggregate agg;
  agg.num_runs = cfg.num_runs;
  agg.accuracy = detail::aggregate_metric(runs, &MetricsReport::accuracy);
  agg.sensitivity = detail::aggregate_metric(runs, &MetricsReport::sensitivity);
  agg.specificity = detail::aggregate_metric(runs, &MetricsReport::specificity);
  return {std::move(runs), agg};
}

}  // namespace covidnn
