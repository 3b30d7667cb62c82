// covidnn: operator CLI over the training and evaluation pipeline.
// Subcommands: preprocess, train, eval, predict, roc, multirun, gradcheck.
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
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

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace covidnn;

namespace {

struct RunConfig {
  std::string model = "cnn";  // cnn | alexnet
  std::string manifest;
  std::string out_dir;
  std::string pretrained;  // alexnet only
  bool from_scratch = false;
  double threshold = 0.5;
  int fc_hidden = 32;
  TrainConfig train;
};

int target_size_for(const std::string& model) { return model == "alexnet" ? 227 : 224; }

void apply_config_field(RunConfig& c, const std::string& key, const nlohmann::json& v) {
  try {
    if (key == "model")
      c.model = v.get<std::string>();
    else if (key == "manifest")
      c.manifest = v.get<std::string>();
    else if (key == "out_dir")
      c.out_dir = v.get<std::string>();
    else if (key == "pretrained")
      c.pretrained = v.get<std::string>();
    else if (key == "from_scratch")
      c.from_scratch = v.get<bool>();
    else if (key == "threshold")
      c.threshold = v.get<double>();
    else if (key == "fc_hidden")
      c.fc_hidden = v.get<int>();
    else if (key == "mini_batch_size")
      c.train.mini_batch_size = v.get<int>();
    else if (key == "epochs")
      c.train.epochs = v.get<int>();
    else if (key == "learning_rate")
      c.train.learning_rate = v.get<double>();
    else if (key == "validation_frequency_iters")
      c.train.validation_frequency_iters = v.get<int>();
    else if (key == "shuffle_each_epoch")
      c.train.shuffle_each_epoch = v.get<bool>();
    else if (key == "momentum")
      c.train.momentum = v.get<double>();
    else if (key == "seed")
      c.train.seed = v.get<std::uint64_t>();
    else if (key == "num_runs")
      c.train.num_runs = v.get<int>();
    else
      throw ConfigError("config: unknown field '" + key + "'");
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: field '" + key + "' has the wrong type");
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig c;
  for (const auto& [k, v] : j.items()) apply_config_field(c, k, v);
  return c;
}

void validate_run_config(const RunConfig& c) {
  if (c.model != "cnn" && c.model != "alexnet")
    throw ConfigError("model must be 'cnn' or 'alexnet', got '" + c.model + "'");
  if (c.manifest.empty()) throw ConfigError("manifest path is required");
  if (c.out_dir.empty()) throw ConfigError("out_dir is required");
  if (!(c.threshold > 0.0 && c.threshold < 1.0))
    throw ConfigError("threshold must be inside (0, 1)");
  if (c.fc_hidden < 2) throw ConfigError("fc_hidden must be >= 2");
  if (c.model == "alexnet") {
    if (c.pretrained.empty() && !c.from_scratch)
      throw ConfigError("alexnet needs a pretrained archive or an explicit from_scratch");
    if (!c.pretrained.empty() && c.from_scratch)
      throw ConfigError("pretrained and from_scratch are mutually exclusive");
  } else if (!c.pretrained.empty()) {
    throw ConfigError("model cnn does not take a pretrained archive");
  }
  c.train.validate();
}

ordered_json config_json(const RunConfig& c) {
  ordered_json j;
  j["model"] = c.model;
  j["manifest"] = c.manifest;
  j["out_dir"] = c.out_dir;
  j["pretrained"] = c.pretrained;
  j["from_scratch"] = c.from_scratch;
  j["threshold"] = c.threshold;
  j["fc_hidden"] = c.fc_hidden;
  j["mini_batch_size"] = c.train.mini_batch_size;
  j["epochs"] = c.train.epochs;
  j["learning_rate"] = c.train.learning_rate;
  j["validation_frequency_iters"] = c.train.validation_frequency_iters;
  j["shuffle_each_epoch"] = c.train.shuffle_each_epoch;
  j["momentum"] = c.train.momentum;
  j["seed"] = c.train.seed;
  j["num_runs"] = c.train.num_runs;
  return j;
}

// FNV-1a over the canonical config dump.
std::string config_hash(const ordered_json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("short write to " + path);
}

DatasetManifest load_checked_manifest(const std::string& path) {
  DatasetManifest m = load_manifest_csv(path);
  const auto violations = validate_manifest(m);
  if (!violations.empty()) {
    for (const auto& v : violations)
      std::cerr << "record " << v.record_index << " " << v.path << ": " << v.kind << " ("
                << v.message << ")\n";
    throw DataError("manifest check failed with " + std::to_string(violations.size()) +
                    " violation(s)");
  }
  return m;
}

SampleSet load_split_set(const DatasetManifest& m, Split s, int target) {
  SampleSet set;
  for (const auto& rec : m.records) {
    if (rec.split != s) continue;
    set.images.push_back(
        load_and_preprocess(rec.path, rec.crop ? &*rec.crop : nullptr, target, target));
    set.labels.push_back(rec.label);
  }
  return set;
}

SampleSet load_all_records(const DatasetManifest& m, int target) {
  SampleSet set;
  for (const auto& rec : m.records) {
    set.images.push_back(
        load_and_preprocess(rec.path, rec.crop ? &*rec.crop : nullptr, target, target));
    set.labels.push_back(rec.label);
  }
  return set;
}

// Fully unassigned manifests get the half/half stratified split; manifests
// that assign any split must assign all of them.
void resolve_splits(DatasetManifest& m, std::uint64_t seed) {
  bool any_assigned = false, any_unassigned = false;
  for (const auto& r : m.records)
    (r.split == Split::unassigned ? any_unassigned : any_assigned) = true;
  if (!any_assigned) {
    SeededRng rng(seed);
    stratified_split(m, 0.5, rng);
  } else if (any_unassigned) {
    throw DataError("manifest mixes assigned and unassigned splits");
  }
}

Network<float> build_network(const RunConfig& c, SeededRng& rng) {
  if (c.model == "cnn") return Network<float>(build_proposed_cnn(c.fc_hidden), rng);
  Network<float> net(build_alexnet(), rng);
  if (!c.pretrained.empty()) load_weights(net, c.pretrained);
  net.replace_last_layers(2, rng);
  return net;
}

struct SplitSets {
  SampleSet train, val, test;
};

SplitSets load_train_val_test(const RunConfig& cfg, DatasetManifest& m) {
  resolve_splits(m, cfg.train.seed);
  const int target = target_size_for(cfg.model);
  SplitSets sets{load_split_set(m, Split::train, target), load_split_set(m, Split::val, target),
                 load_split_set(m, Split::test, target)};
  if (sets.train.size() == 0) throw DataError("no training records after split resolution");
  if (sets.val.size() == 0) throw DataError("no validation records after split resolution");
  return sets;
}

int cmd_preprocess(const std::string& manifest_path, const std::string& out_dir, int size) {
  DatasetManifest m = load_checked_manifest(manifest_path);
  fs::create_directories(out_dir);
  for (const auto& rec : m.records) {
    const Tensor<float> t =
        load_and_preprocess(rec.path, rec.crop ? &*rec.crop : nullptr, size, size);
    write_tensor_cache(out_dir + "/" + cache_key(rec, size), t);
  }
  save_manifest_csv(m, out_dir + "/manifest.csv");
  std::cout << "cached " << m.records.size() << " tensors to " << out_dir << "\n";
  return 0;
}

int cmd_train(RunConfig cfg) {
  validate_run_config(cfg);
  DatasetManifest m = load_checked_manifest(cfg.manifest);
  SplitSets sets = load_train_val_test(cfg, m);
  fs::create_directories(cfg.out_dir);
  // the resolved split assignment, so eval/roc can reuse the exact same sets
  save_manifest_csv(m, cfg.out_dir + "/manifest.csv");

  SeededRng rng(cfg.train.seed);
  Network<float> net = build_network(cfg, rng);
  const TrainingCurve curve = train(net, sets.train, sets.val, cfg.train, rng);
  const double final_val = accuracy_on(net, sets.val, cfg.train.mini_batch_size);

  save_weights(net, cfg.out_dir + "/weights.cvnw");
  write_text(cfg.out_dir + "/curve.csv", curve.to_csv());

  const bool has_test = sets.test.size() > 0;
  SampleSet& eval_set = has_test ? sets.test : sets.val;
  const MetricsReport metrics = evaluate_set(net, eval_set, cfg.threshold, cfg.model,
                                             to_string(m.modality), cfg.train.mini_batch_size);

  const ordered_json cj = config_json(cfg);
  ordered_json run;
  run["command"] = "train";
  run["config"] = cj;
  run["config_hash"] = config_hash(cj);
  run["counts"] = ordered_json{
      {"train", sets.train.size()}, {"val", sets.val.size()}, {"test", sets.test.size()}};
  run["iterations"] = curve.points.size();
  run["final_val_accuracy"] = final_val;
  run["eval_split"] = has_test ? "test" : "val";
  run["metrics"] = metrics.to_json();
  write_text(cfg.out_dir + "/run.json", run.dump(2) + "\n");

  std::cout << "trained " << curve.points.size() << " iterations, final val accuracy "
            << format_double(final_val) << "\n";
  std::cout << "artifacts in " << cfg.out_dir << "\n";
  return 0;
}

int cmd_multirun(RunConfig cfg) {
  validate_run_config(cfg);
  DatasetManifest m = load_checked_manifest(cfg.manifest);
  SplitSets sets = load_train_val_test(cfg, m);
  fs::create_directories(cfg.out_dir);
  save_manifest_csv(m, cfg.out_dir + "/manifest.csv");

  const bool has_test = sets.test.size() > 0;
  const SampleSet& eval_set = has_test ? sets.test : sets.val;
  auto builder = [&cfg](SeededRng& rng) { return build_network(cfg, rng); };
  const auto [runs, agg] = multirun(builder, sets.train, sets.val, eval_set, cfg.train,
                                    cfg.threshold, cfg.model, to_string(m.modality));

  ordered_json runs_json = ordered_json::array();
  for (const auto& r : runs) {
    write_text(cfg.out_dir + "/run_" + std::to_string(r.run_index) + "_curve.csv",
               r.curve.to_csv());
    ordered_json rj;
    rj["run_index"] = r.run_index;
    rj["seed"] = r.seed;
    rj["metrics"] = r.metrics.to_json();
    runs_json.push_back(std::move(rj));
  }
  write_text(cfg.out_dir + "/runs.json", runs_json.dump(2) + "\n");

  const ordered_json cj = config_json(cfg);
  ordered_json out;
  out["command"] = "multirun";
  out["config"] = cj;
  out["config_hash"] = config_hash(cj);
  out["eval_split"] = has_test ? "test" : "val";
  out["aggregate"] = agg.to_json();
  const std::string dump = out.dump(2) + "\n";
  write_text(cfg.out_dir + "/aggregate.json", dump);
  std::cout << dump;
  return 0;
}

Network<float> load_network(const std::string& weights_path) {
  const ModelSpec spec = load_model_spec(weights_path);
  SeededRng rng(0);  // initial values are replaced by the archive
  Network<float> net(spec, rng);
  load_weights(net, weights_path);
  return net;
}

SampleSet load_named_split(const DatasetManifest& m, const std::string& split_name, int target) {
  SampleSet set = split_name == "all" ? load_all_records(m, target)
                                      : load_split_set(m, split_from_string(split_name), target);
  if (set.size() == 0) throw DataError("no records in split '" + split_name + "'");
  return set;
}

int cmd_eval(const std::string& weights, const std::string& manifest_path,
             const std::string& split_name, double threshold, const std::string& modality,
             const std::string& out_path) {
  Network<float> net = load_network(weights);
  const DatasetManifest m = load_checked_manifest(manifest_path);
  SampleSet set = load_named_split(m, split_name, net.input_shape()[0]);
  const MetricsReport rep =
      evaluate_set(net, set, threshold, net.spec().name, modality, 10);
  const std::string dump = rep.to_json().dump(2) + "\n";
  std::cout << dump;
  if (!out_path.empty()) write_text(out_path, dump);
  return 0;
}

std::optional<CropRect> parse_crop(const std::string& text) {
  if (text.empty()) return std::nullopt;
  CropRect r;
  char extra = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d,%d%c", &r.x, &r.y, &r.w, &r.h, &extra) != 4)
    throw ConfigError("crop must be 'x,y,w,h', got '" + text + "'");
  return r;
}

int cmd_predict(const std::string& weights, const std::string& image_path,
                const std::string& crop_text, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ConfigError("threshold must be inside (0, 1)");
  Network<float> net = load_network(weights);
  const int target = net.input_shape()[0];
  const auto crop_rect = parse_crop(crop_text);
  const Tensor<float> img =
      load_and_preprocess(image_path, crop_rect ? &*crop_rect : nullptr, target, target);
  const Tensor<float> batch({1, target, target, 3}, img.values());
  const Tensor<float> probs = net.predict_proba(batch, Mode::infer);
  const double p1 = static_cast<double>(probs.at(0, 1));
  std::cout << (p1 >= threshold ? 1 : 0) << "," << format_double(p1) << "\n";
  return 0;
}

int cmd_roc(const std::string& weights, const std::string& manifest_path,
            const std::string& split_name, const std::string& out_csv) {
  Network<float> net = load_network(weights);
  const DatasetManifest m = load_checked_manifest(manifest_path);
  SampleSet set = load_named_split(m, split_name, net.input_shape()[0]);
  const auto scores = score_positive_probs(net, set, 10);
  const auto pts = roc_points(scores, set.labels);
  write_text(out_csv, roc_to_csv(pts));
  ordered_json j;
  j["auc"] = roc_auc(pts);
  j["num_points"] = pts.size();
  j["csv"] = out_csv;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_gradcheck(int seeds, double step, double tol) {
  const auto cases = run_layer_gradchecks(seeds, step, tol);
  std::vector<std::string> order;
  std::map<std::string, double> worst;
  std::map<std::string, bool> ok;
  for (const auto& c : cases) {
    if (!worst.count(c.layer)) {
      order.push_back(c.layer);
      worst[c.layer] = 0.0;
      ok[c.layer] = true;
    }
    worst[c.layer] = std::max(worst[c.layer], c.max_err);
    ok[c.layer] = ok[c.layer] && c.pass;
  }
  int failures = 0;
  for (const auto& layer : order) {
    std::cout << (ok[layer] ? "PASS " : "FAIL ") << layer << " max_rel_err "
              << format_double(worst[layer]) << "\n";
    if (!ok[layer]) ++failures;
  }
  if (failures > 0)
    throw NumericError(std::to_string(failures) + " layer(s) failed the gradient check");
  std::cout << "all " << cases.size() << " gradient checks passed\n";
  return 0;
}

// The engine runs sequentially, so any cap at or above one changes nothing;
// the variable is still validated to catch operator typos.
void check_thread_cap() {
  const char* env = std::getenv("COVIDNN_THREADS");
  if (!env) return;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1)
    throw ConfigError("COVIDNN_THREADS must be a positive integer, got '" + std::string(env) +
                      "'");
}

struct TrainCliOpts {
  std::string config_path, model, manifest, out_dir, pretrained;
  bool from_scratch = false, no_shuffle = false;
  double threshold = 0.5, lr = 3e-4, momentum = 0.9;
  int fc_hidden = 32, batch = 10, epochs = 20, val_freq = 3, runs = 10;
  std::uint64_t seed = 1;
  CLI::Option *o_model = nullptr, *o_manifest = nullptr, *o_out = nullptr,
              *o_pretrained = nullptr, *o_from_scratch = nullptr, *o_threshold = nullptr,
              *o_fc_hidden = nullptr, *o_batch = nullptr, *o_epochs = nullptr, *o_lr = nullptr,
              *o_momentum = nullptr, *o_val_freq = nullptr, *o_seed = nullptr, *o_runs = nullptr,
              *o_no_shuffle = nullptr;
};

void add_train_options(CLI::App* sub, TrainCliOpts& o) {
  sub->add_option("--config", o.config_path, "JSON config file; flags override its values");
  o.o_model = sub->add_option("--model", o.model, "cnn or alexnet");
  o.o_manifest = sub->add_option("--manifest", o.manifest, "dataset manifest CSV");
  o.o_out = sub->add_option("--out-dir", o.out_dir, "output directory");
  o.o_pretrained = sub->add_option("--pretrained", o.pretrained, "pretrained archive (alexnet)");
  o.o_from_scratch = sub->add_flag("--from-scratch", o.from_scratch, "random-init alexnet");
  o.o_threshold = sub->add_option("--threshold", o.threshold, "positive decision threshold");
  o.o_fc_hidden = sub->add_option("--fc-hidden", o.fc_hidden, "width of the hidden fc layer");
  o.o_batch = sub->add_option("--batch-size", o.batch, "minibatch size");
  o.o_epochs = sub->add_option("--epochs", o.epochs, "training epochs");
  o.o_lr = sub->add_option("--lr", o.lr, "learning rate");
  o.o_momentum = sub->add_option("--momentum", o.momentum, "SGD momentum");
  o.o_val_freq = sub->add_option("--val-freq", o.val_freq, "iterations between validations");
  o.o_seed = sub->add_option("--seed", o.seed, "master seed");
  o.o_runs = sub->add_option("--runs", o.runs, "number of runs (multirun)");
  o.o_no_shuffle = sub->add_flag("--no-shuffle", o.no_shuffle, "keep epoch order fixed");
}

RunConfig resolve_run_config(const TrainCliOpts& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.o_model->count()) c.model = o.model;
  if (o.o_manifest->count()) c.manifest = o.manifest;
  if (o.o_out->count()) c.out_dir = o.out_dir;
  if (o.o_pretrained->count()) c.pretrained = o.pretrained;
  if (o.o_from_scratch->count()) c.from_scratch = o.from_scratch;
  if (o.o_threshold->count()) c.threshold = o.threshold;
  if (o.o_fc_hidden->count()) c.fc_hidden = o.fc_hidden;
  if (o.o_batch->count()) c.train.mini_batch_size = o.batch;
  if (o.o_epochs->count()) c.train.epochs = o.epochs;
  if (o.o_lr->count()) c.train.learning_rate = o.lr;
  if (o.o_momentum->count()) c.train.momentum = o.momentum;
  if (o.o_val_freq->count()) c.train.validation_frequency_iters = o.val_freq;
  if (o.o_seed->count()) c.train.seed = o.seed;
  if (o.o_runs->count()) c.train.num_runs = o.runs;
  if (o.o_no_shuffle->count()) c.train.shuffle_each_epoch = false;
  return c;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"training and evaluation pipeline for binary chest-image classification"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("preprocess", "validate a manifest and cache its tensors");
  std::string pre_manifest, pre_out;
  int pre_size = 224;
  pre->add_option("--manifest", pre_manifest, "dataset manifest CSV")->required();
  pre->add_option("--out-dir", pre_out, "cache directory")->required();
  pre->add_option("--size", pre_size, "target side length")->check(CLI::IsMember({224, 227}));

  auto* tr = app.add_subcommand("train", "train one model; emits weights, curve, metadata");
  TrainCliOpts tro;
  add_train_options(tr, tro);

  auto* mr = app.add_subcommand("multirun", "train across consecutive seeds and aggregate");
  TrainCliOpts mro;
  add_train_options(mr, mro);

  auto* ev = app.add_subcommand("eval", "confusion metrics of saved weights on a split");
  std::string ev_weights, ev_manifest, ev_split = "test", ev_modality = "xray", ev_out;
  double ev_threshold = 0.5;
  ev->add_option("--weights", ev_weights, "weights archive")->required();
  ev->add_option("--manifest", ev_manifest, "dataset manifest CSV")->required();
  ev->add_option("--split", ev_split, "train, val, test or all");
  ev->add_option("--threshold", ev_threshold, "positive decision threshold");
  ev->add_option("--modality", ev_modality, "xray or ct, echoed in the report");
  ev->add_option("--out", ev_out, "also write the report JSON here");

  auto* pd = app.add_subcommand("predict", "classify one image; prints label,probability");
  std::string pd_weights, pd_image, pd_crop;
  double pd_threshold = 0.5;
  pd->add_option("--weights", pd_weights, "weights archive")->required();
  pd->add_option("--image", pd_image, "image file")->required();
  pd->add_option("--crop", pd_crop, "crop rectangle x,y,w,h before resizing");
  pd->add_option("--threshold", pd_threshold, "positive decision threshold");

  auto* rc = app.add_subcommand("roc", "ROC curve CSV of saved weights on a split");
  std::string rc_weights, rc_manifest, rc_split = "test", rc_out;
  rc->add_option("--weights", rc_weights, "weights archive")->required();
  rc->add_option("--manifest", rc_manifest, "dataset manifest CSV")->required();
  rc->add_option("--split", rc_split, "train, val, test or all");
  rc->add_option("--out", rc_out, "curve CSV path")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of every layer backward");
  int gc_seeds = 10;
  double gc_step = 1e-5, gc_tol = 1e-4;
  gc->add_option("--seeds", gc_seeds, "number of random seeds");
  gc->add_option("--step", gc_step, "finite difference step");
  gc->add_option("--tol", gc_tol, "max relative error allowed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  check_thread_cap();

  if (*pre) return cmd_preprocess(pre_manifest, pre_out, pre_size);
  if (*tr) return cmd_train(resolve_run_config(tro));
  if (*mr) return cmd_multirun(resolve_run_config(mro));
  if (*ev) return cmd_eval(ev_weights, ev_manifest, ev_split, ev_threshold, ev_modality, ev_out);
  if (*pd) return cmd_predict(pd_weights, pd_image, pd_crop, pd_threshold);
  if (*rc) return cmd_roc(rc_weights, rc_manifest, rc_split, rc_out);
  if (*gc) return cmd_gradcheck(gc_seeds, gc_step, gc_tol);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
