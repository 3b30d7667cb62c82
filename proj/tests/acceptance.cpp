// Release gate: one check per acceptance criterion, each printing a single
// PASS or FAIL line. Usage: covidnn_acceptance <path-to-cli-binary>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "covidnn/dataset.hpp"
#include "covidnn/errors.hpp"
#include "covidnn/gradcheck.hpp"
#include "covidnn/image.hpp"
#include "covidnn/metrics.hpp"
#include "covidnn/model.hpp"
#include "covidnn/model_io.hpp"
#include "covidnn/rng.hpp"
#include "covidnn/train.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace covidnn;
using testutil::run_cmd;
using testutil::slurp;
using testutil::TempDir;
using testutil::write_blob_dataset;

namespace {

int failures = 0;
std::string cli_bin;

void report(int idx, const std::string& name, bool ok, const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << " [" << idx << "] " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// In-memory blob samples at the network's native resolution.
SampleSet blob_set(int n, int side, SeededRng& rng) {
  SampleSet s;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    const ImageU8 img = testutil::blob_image(rng, label == 1, side);
    s.images.push_back(replicate_channels(image_to_tensor(img), 3));
    s.labels.push_back(label);
  }
  return s;
}

void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = run_layer_gradchecks(10);
  const double secs = seconds_since(t0);
  bool all = !cases.empty();
  double worst = 0.0;
  for (const auto& c : cases) {
    all = all && c.pass;
    worst = std::max(worst, c.max_err);
    if (!c.pass)
      std::cerr << "gradcheck fail: " << c.layer << " " << c.tensor << " seed " << c.seed
                << " err " << c.max_err << "\n";
  }
  report(1, "layer gradients match finite differences",
         all && secs < 60.0,
         std::to_string(cases.size()) + " cases, worst rel err " + format_double(worst) + ", " +
             format_double(secs) + "s");
}

void check_shapes() {
  SeededRng rng(21);
  Network<float> cnn(build_proposed_cnn(), rng);
  Tensor<float> x({1, 224, 224, 3});
  SeededRng fill(22);
  for (auto& v : x) v = static_cast<float>(fill.uniform(0.0, 1.0));

  const Tensor<float> conv_out = cnn.layers()[0]->forward(x, Mode::infer);
  const bool conv_ok = conv_out.shape() == std::vector<int>{1, 224, 224, 16};
  const Tensor<float> logits = cnn.forward_logits(x, Mode::train);
  const bool logits_ok = logits.shape() == std::vector<int>{1, 2};

  Network<float> alex(build_alexnet(), rng);
  Tensor<float> xa({1, 227, 227, 3});
  for (auto& v : xa) v = static_cast<float>(fill.uniform(0.0, 1.0));
  bool conv1_ok = false, flatten_ok = false;
  Tensor<float> cur = xa;
  for (auto& l : alex.layers()) {
    cur = l->forward(cur, Mode::infer);
    if (l->name() == "conv1")
      conv1_ok = cur.shape() == std::vector<int>{1, 55, 55, 96};
    if (l->name() == "flatten")
      flatten_ok = cur.shape() == std::vector<int>{1, 9216};
  }
  const bool alex_logits_ok = cur.shape() == std::vector<int>{1, 1000};

  report(2, "architecture output shapes",
         conv_ok && logits_ok && conv1_ok && flatten_ok && alex_logits_ok,
         "conv 224x224x16, 2 logits; conv1 55, flatten 9216, 1000 logits");
}

void check_protocol_structure() {
  TempDir tmp("covidnn_acc3_");
  const auto manifest = write_blob_dataset(tmp.str("data"), 120, 32, 300);
  const auto out = tmp.str("run");
  const auto r = run_cmd(cli_bin + " train --manifest " + manifest + " --out-dir " + out +
                         " --fc-hidden 8 --seed 3");
  if (r.exit_code != 0) {
    std::cerr << r.output;
    report(3, "training protocol structure", false, "cli exit " + std::to_string(r.exit_code));
    return;
  }
  const auto curve = TrainingCurve::from_csv(slurp(out + "/curve.csv"));
  bool ok = curve.points.size() == 120;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    ok = ok && p.iteration == static_cast<int>(i) + 1;
    ok = ok && (p.val_accuracy.has_value() == (p.iteration % 3 == 0));
  }
  const auto run = nlohmann::json::parse(slurp(out + "/run.json"));
  ok = ok && run["counts"]["train"] == 60 && run["counts"]["val"] == 60;
  report(3, "training protocol structure", ok,
         std::to_string(curve.points.size()) + " iterations, validation every 3rd, 60/60 split");
}

void check_learning() {
  const auto t0 = std::chrono::steady_clock::now();

  SeededRng data_rng(400);
  const SampleSet train_set = blob_set(12, 224, data_rng);
  const SampleSet val_set = blob_set(20, 224, data_rng);

  TrainConfig cfg;  // library defaults: batch 10, 20 epochs, lr 3e-4, momentum 0.9
  cfg.seed = 1;
  SeededRng rng(cfg.seed);
  Network<float> net(build_proposed_cnn(), rng);
  const TrainingCurve curve = train(net, train_set, val_set, cfg, rng);
  const double train_acc = accuracy_on(net, train_set, cfg.mini_batch_size);
  const double val_acc = accuracy_on(net, val_set, cfg.mini_batch_size);
  const bool single_ok =
      curve.points.size() <= 200 && train_acc == 1.0 && val_acc >= 0.95;

  TempDir tmp("covidnn_acc4_");
  const auto manifest = write_blob_dataset(tmp.str("data"), 32, 224, 410, [](int i) {
    return i < 12 ? Split::train : Split::val;
  });
  const auto out = tmp.str("runs");
  const auto r = run_cmd(cli_bin + " multirun --manifest " + manifest + " --out-dir " + out +
                         " --runs 10 --seed 1");
  double mean_val = 0.0;
  bool multi_ok = r.exit_code == 0;
  if (multi_ok) {
    const auto agg = nlohmann::json::parse(slurp(out + "/aggregate.json"));
    mean_val = agg["aggregate"]["accuracy"]["mean"].get<double>();
    multi_ok = agg["aggregate"]["accuracy"]["count"] == 10 && mean_val >= 0.95;
  } else {
    std::cerr << r.output;
  }

  const double secs = seconds_since(t0);
  report(4, "learning smoke test", single_ok && multi_ok && secs < 600.0,
         "train acc " + format_double(train_acc) + " in " +
             std::to_string(curve.points.size()) + " iters, val acc " + format_double(val_acc) +
             ", 10-run mean val acc " + format_double(mean_val) + ", " + format_double(secs) +
             "s");
}

void check_metric_exactness() {
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 25; ++i) {
    scores.push_back(0.9);
    labels.push_back(1);
  }
  for (int i = 0; i < 23; ++i) {
    scores.push_back(0.1);
    labels.push_back(0);
  }
  for (int i = 0; i < 2; ++i) {
    scores.push_back(0.8);
    labels.push_back(0);
  }
  const MetricsReport rep = evaluate_scores(scores, labels, 0.5, "m", "xray");
  bool ok = rep.confusion.tp == 25 && rep.confusion.fn == 0 && rep.confusion.tn == 23 &&
            rep.confusion.fp == 2;
  ok = ok && rep.accuracy && *rep.accuracy == 0.96;
  ok = ok && rep.sensitivity && *rep.sensitivity == 1.0;
  ok = ok && rep.specificity && *rep.specificity == 0.92;

  // recount oracle on random fixtures
  SeededRng rng(500);
  int checked = 0;
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(80));
    const double threshold = 0.25 * (1 + static_cast<double>(rng.next_below(3)));
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.next_below(11)) / 10.0;
      l[i] = static_cast<int>(rng.next_below(2));
    }
    const ConfusionMatrix cm = tally_confusion(s, l, threshold);
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
      const int pred = s[i] >= threshold ? 1 : 0;
      if (pred == 1 && l[i] == 1) ++tp;
      if (pred == 0 && l[i] == 0) ++tn;
      if (pred == 1 && l[i] == 0) ++fp;
      if (pred == 0 && l[i] == 1) ++fn;
    }
    ok = ok && cm.tp == tp && cm.tn == tn && cm.fp == fp && cm.fn == fn;
    const MetricsReport r2 = make_report(cm, threshold, "m", "xray");
    if (tp + fn > 0)
      ok = ok && r2.sensitivity && *r2.sensitivity == static_cast<double>(tp) / (tp + fn);
    else
      ok = ok && !r2.sensitivity;
    if (tn + fp > 0)
      ok = ok && r2.specificity && *r2.specificity == static_cast<double>(tn) / (tn + fp);
    else
      ok = ok && !r2.specificity;
    ok = ok && r2.accuracy && *r2.accuracy == static_cast<double>(tp + tn) / n;
    ++checked;
  }
  report(5, "confusion metric exactness", ok,
         "fixture counts 25/0/23/2, " + std::to_string(checked) + " random recounts");
}

// AUC by direct threshold enumeration: one operating point per distinct
// score plus the all-negative start.
double auc_by_threshold_enum(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> distinct = scores;
  std::sort(distinct.begin(), distinct.end(), std::greater<>());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::int64_t pos = 0, neg = 0;
  for (int l : labels) (l == 1 ? pos : neg)++;
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (double t : distinct) {
    std::int64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (labels[i] == 1 ? tp : fp)++;
    }
    pts.emplace_back(static_cast<double>(fp) / neg, static_cast<double>(tp) / pos);
  }
  double auc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    auc += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  return auc;
}

void check_roc_properties() {
  SeededRng rng(600);
  bool ok = true;
  double worst = 0.0;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(59));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(1 + rng.next_below(8)) / 9.0;
      labels[i] = static_cast<int>(rng.next_below(2));
    }
    labels[0] = 1;
    if (n > 1) labels[1] = 0;

    const auto pts = roc_points(scores, labels);
    ok = ok && pts.size() >= 2;
    ok = ok && pts.front().fpr == 0.0 && pts.front().tpr == 0.0;
    ok = ok && pts.back().fpr == 1.0 && pts.back().tpr == 1.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      ok = ok && pts[i].fpr >= pts[i - 1].fpr;
      ok = ok && pts[i].tpr >= pts[i - 1].tpr;
    }
    const double diff = std::abs(roc_auc(pts) - auc_by_threshold_enum(scores, labels));
    worst = std::max(worst, diff);
    ok = ok && diff <= 1e-12;
  }
  report(6, "roc curve properties", ok, "100 trials, worst auc gap " + format_double(worst));
}

void check_serialization() {
  TempDir tmp("covidnn_acc7_");
  SeededRng rng(700);
  Network<float> net(build_proposed_cnn(), rng);
  Tensor<float> batch({2, 224, 224, 3});
  for (auto& v : batch) v = static_cast<float>(rng.uniform(0.0, 1.0));
  net.forward_logits(batch, Mode::train);  // realistic batchnorm statistics

  const std::string a = tmp.str("a.cvnw"), b = tmp.str("b.cvnw");
  save_weights(net, a);

  SeededRng rng2(701);
  Network<float> net2(build_proposed_cnn(), rng2);
  load_weights(net2, a);
  save_weights(net2, b);
  const bool roundtrip_ok = slurp(a) == slurp(b);
  fs::remove(b);
  fs::remove(b + ".json");

  // payload size against the enumerated parameter table
  std::int64_t table_floats = 0;
  for (const auto& [name, shape] : spec_param_table(build_proposed_cnn()))
    table_floats += shape_size(shape);
  const auto entries = read_archive_header(a);
  std::int64_t payload_floats = 0;
  for (const auto& e : entries) payload_floats += shape_size(e.shape);
  const bool size_ok = payload_floats == table_floats && table_floats == 25691490;

  auto code_of = [](const std::function<void()>& fn, ArchiveErrorCode expect) {
    try {
      fn();
      return false;
    } catch (const ArchiveError& e) {
      return e.code() == expect;
    }
  };

  const std::string junk = tmp.str("junk.cvnw");
  {
    std::ofstream out(junk, std::ios::binary);
    out << "XXXXnot an archive";
  }
  const bool magic_ok =
      code_of([&] { read_archive(junk); }, ArchiveErrorCode::bad_magic);

  const std::string cut = tmp.str("cut.cvnw");
  fs::copy_file(a, cut);
  fs::resize_file(cut, fs::file_size(cut) - 8);
  const bool trunc_ok =
      code_of([&] { read_archive(cut); }, ArchiveErrorCode::truncated_payload);
  fs::remove(cut);

  // same tensor set, one shape altered
  const std::string reshaped = tmp.str("reshaped.cvnw");
  {
    std::vector<NamedTensor> tensors;
    Tensor<float> wrong({1, 2});
    for (auto& p : net.params()) {
      if (p.name == "fc2.bias")
        tensors.push_back({p.name, &wrong});
      else
        tensors.push_back({p.name, p.value});
    }
    write_archive(reshaped, tensors);
  }
  const bool shape_ok = code_of(
      [&] {
        SeededRng r(702);
        Network<float> victim(build_proposed_cnn(), r);
        load_weights(victim, reshaped);
      },
      ArchiveErrorCode::shape_mismatch);

  report(7, "archive round trip and error taxonomy",
         roundtrip_ok && size_ok && magic_ok && trunc_ok && shape_ok,
         "payload " + std::to_string(payload_floats * 4) + " bytes = 4 x " +
             std::to_string(payload_floats) + " floats");
}

void check_transfer_surgery() {
  TempDir tmp("covidnn_acc8_");
  SeededRng rng(800);
  Network<float> alex(build_alexnet(), rng);
  // simulate trained weights: every tensor nonconstant, biases included
  for (auto& p : alex.params())
    for (auto& v : *p.value) v = static_cast<float>(rng.uniform(-0.05, 0.05));

  const std::string pre = tmp.str("pretrained.cvnw");
  save_weights(alex, pre);
  const VerifyReport pre_report = verify_pretrained_alexnet(pre);

  alex.replace_last_layers(2, rng);
  Tensor<float> x({1, 227, 227, 3});
  const Tensor<float> logits = alex.forward_logits(x, Mode::infer);
  const bool two_logits = logits.shape() == std::vector<int>{1, 2};

  const std::string post = tmp.str("surgered.cvnw");
  save_weights(alex, post);
  const VerifyReport post_report = verify_pretrained_alexnet(post);

  const ArchiveContents before = read_archive(pre);
  const ArchiveContents after = read_archive(post);
  fs::remove(pre);
  fs::remove(post);
  auto region = [](const ArchiveContents& a, const std::string& name)
      -> std::pair<const float*, std::int64_t> {
    for (const auto& e : a.entries)
      if (e.name == name)
        return {a.payload.data() + e.offset / sizeof(float), shape_size(e.shape)};
    return {nullptr, 0};
  };
  bool untouched = true;
  for (const auto& e : before.entries) {
    if (e.name.rfind("fc8.", 0) == 0) continue;
    const auto [pb, nb] = region(before, e.name);
    const auto [pa, na] = region(after, e.name);
    untouched = untouched && pa != nullptr && na == nb &&
                std::memcmp(pa, pb, static_cast<std::size_t>(nb) * sizeof(float)) == 0;
  }

  const auto flagged = post_report.flagged_names();
  const std::set<std::string> flagged_set(flagged.begin(), flagged.end());
  const bool flags_ok = !post_report.all_ok &&
                        flagged_set == std::set<std::string>{"fc8.weight", "fc8.bias"} &&
                        post_report.extra_tensors.empty();

  report(8, "head replacement and pretrained audit",
         pre_report.all_ok && two_logits && untouched && flags_ok,
         "pre-head tensors bitwise stable, flags exactly fc8.weight fc8.bias");
}

void check_cli_determinism() {
  TempDir tmp("covidnn_acc9_");
  const auto manifest = write_blob_dataset(tmp.str("data"), 24, 32, 900, [](int i) {
    return i < 12 ? Split::train : Split::val;
  });
  const std::string cmd = " train --manifest " + manifest +
                          " --fc-hidden 8 --epochs 5 --seed 77 --out-dir ";
  const auto r1 = run_cmd(cli_bin + cmd + tmp.str("r1"));
  const auto r2 = run_cmd(cli_bin + cmd + tmp.str("r2"));
  bool ok = r1.exit_code == 0 && r2.exit_code == 0;
  if (!ok) std::cerr << r1.output << r2.output;
  ok = ok && slurp(tmp.str("r1/weights.cvnw")) == slurp(tmp.str("r2/weights.cvnw"));
  ok = ok && slurp(tmp.str("r1/weights.cvnw.json")) == slurp(tmp.str("r2/weights.cvnw.json"));
  ok = ok && slurp(tmp.str("r1/curve.csv")) == slurp(tmp.str("r2/curve.csv"));
  report(9, "end-to-end determinism", ok, "weights and curve byte-identical across reruns");
}

void guard(int idx, const std::string& name, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(idx, name, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: covidnn_acceptance <cli-binary>\n";
    return 2;
  }
  cli_bin = argv[1];

  guard(1, "layer gradients match finite differences", check_gradients);
  guard(2, "architecture output shapes", check_shapes);
  guard(3, "training protocol structure", check_protocol_structure);
  guard(4, "learning smoke test", check_learning);
  guard(5, "confusion metric exactness", check_metric_exactness);
  guard(6, "roc curve properties", check_roc_properties);
  guard(7, "archive round trip and error taxonomy", check_serialization);
  guard(8, "head replacement and pretrained audit", check_transfer_surgery);
  guard(9, "end-to-end determinism", check_cli_determinism);

  if (failures == 0) {
    std::cout << "all 9 criteria passed" << std::endl;
    return 0;
  }
  std::cout << failures << " criteria failed" << std::endl;
  return 1;
}
