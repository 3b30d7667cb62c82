#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace covidnn {

struct ConfusionMatrix {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::int64_t total() const { return tp + tn + fp + fn; }
};

// Prediction rule: positive when p(class 1) >= threshold, so an exact tie
// counts as positive.
ConfusionMatrix tally_confusion(const std::vector<double>& positive_probs,
                                const std::vector<int>& labels, double threshold);

struct MetricsReport {
  std::string model;
  std::string modality;
  std::int64_t n = 0;
  ConfusionMatrix confusion;
  double threshold = 0.5;
  // Empty optionals mean an undefined ratio (zero denominator), serialized as
  // null, never as 0/0 = 0.
  std::optional<double> accuracy, sensitivity, specificity;

  nlohmann::ordered_json to_json() const;
};

MetricsReport make_report(const ConfusionMatrix& cm, double threshold, const std::string& model,
                          const std::string& modality);

MetricsReport evaluate_scores(const std::vector<double>& positive_probs,
                              const std::vector<int>& labels, double threshold,
                              const std::string& model, const std::string& modality);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

// One point per distinct score plus +/- infinity sentinels, deduplicated on
// (fpr, tpr) keeping the highest threshold, ordered from (0,0) to (1,1).
// Requires at least one positive and one negative label.
std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                 const std::vector<int>& labels);

// Trapezoidal area under the curve.
double roc_auc(const std::vector<RocPoint>& points);

// CSV with header threshold,fpr,tpr.
std::string roc_to_csv(const std::vector<RocPoint>& points);

// Shortest round-trip decimal text for a double ("inf"/"-inf" at the ends).
std::string format_double(double v);

}  // namespace covidnn
