#include "covidnn/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "covidnn/errors.hpp"

namespace covidnn {

ConfusionMatrix tally_confusion(const std::vector<double>& positive_probs,
                                const std::vector<int>& labels, double threshold) {
  if (positive_probs.size() != labels.size())
    throw std::invalid_argument("tally_confusion: " + std::to_string(positive_probs.size()) +
                                " scores for " + std::to_string(labels.size()) + " labels");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("tally_confusion: threshold must be in (0, 1)");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw std::invalid_argument("tally_confusion: label " + std::to_string(labels[i]) +
                                  " is not binary");
    const bool predicted_positive = positive_probs[i] >= threshold;
    if (labels[i] == 1)
      (predicted_positive ? cm.tp : cm.fn)++;
    else
      (predicted_positive ? cm.fp : cm.tn)++;
  }
  return cm;
}

MetricsReport make_report(const ConfusionMatrix& cm, double threshold, const std::string& model,
                          const std::string& modality) {
  MetricsReport r;
  r.model = model;
  r.modality = modality;
  r.n = cm.total();
  r.confusion = cm;
  r.threshold = threshold;
  if (r.n > 0)
    r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(r.n);
  if (cm.tp + cm.fn > 0)
    r.sensitivity = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  if (cm.tn + cm.fp > 0)
    r.specificity = static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
  return r;
}

MetricsReport evaluate_scores(const std::vector<double>& positive_probs,
                              const std::vector<int>& labels, double threshold,
                              const std::string& model, const std::string& modality) {
  if (labels.empty()) throw DataError("evaluate_scores: empty evaluation set");
  return make_report(tally_confusion(positive_probs, labels, threshold), threshold, model,
                     modality);
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["modality"] = modality;
  j["n"] = n;
  j["tp"] = confusion.tp;
  j["tn"] = confusion.tn;
  j["fp"] = confusion.fp;
  j["fn"] = confusion.fn;
  j["accuracy"] = accuracy ? nlohmann::ordered_json(*accuracy) : nlohmann::ordered_json(nullptr);
  j["sensitivity"] =
      sensitivity ? nlohmann::ordered_json(*sensitivity) : nlohmann::ordered_json(nullptr);
  j["specificity"] =
      specificity ? nlohmann::ordered_json(*specificity) : nlohmann::ordered_json(nullptr);
  j["threshold"] = threshold;
  return j;
}

std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("roc_points: score/label count mismatch");
  std::int64_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1)
      throw std::invalid_argument("roc_points: label " + std::to_string(l) + " is not binary");
    (l == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("roc_points: need both classes, got " + std::to_string(pos) +
                                " positive / " + std::to_string(neg) + " negative");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("roc_points: non-finite score");

  // Pair and sort by descending score; sweeping the threshold down accumulates
  // predicted positives.
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  std::vector<RocPoint> pts;
  pts.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    pts.push_back({t, static_cast<double>(fp) / static_cast<double>(neg),
                   static_cast<double>(tp) / static_cast<double>(pos)});
  }
  pts.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});

  // Already ordered by construction; drop repeats of the same (fpr, tpr),
  // keeping the first (highest threshold).
  std::vector<RocPoint> dedup;
  for (const auto& p : pts)
    if (dedup.empty() || dedup.back().fpr != p.fpr || dedup.back().tpr != p.tpr)
      dedup.push_back(p);
  return dedup;
}

double roc_auc(const std::vector<RocPoint>& points) {
  if (points.size() < 2) throw std::invalid_argument("roc_auc: need at least two points");
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  return area;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

std::string roc_to_csv(const std::vector<RocPoint>& points) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : points)
    out += format_double(p.threshold) + "," + format_double(p.fpr) + "," + format_double(p.tpr) +
           "\n";
  return out;
}

}  // namespace covidnn
