#include "covidnn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "covidnn/errors.hpp"

namespace covidnn {

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "";
  }
  return "";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s.empty()) return Split::unassigned;
  throw DataError("unknown split '" + s + "'");
}

const char* to_string(Modality m) { return m == Modality::xray ? "xray" : "ct"; }

Modality modality_from_string(const std::string& s) {
  if (s == "xray") return Modality::xray;
  if (s == "ct") return Modality::ct;
  throw DataError("unknown modality '" + s + "'");
}

namespace {

constexpr const char* kHeader = "path,label,split,source,crop_x,crop_y,crop_w,crop_h";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

int parse_int(const std::string& s, const char* what, int line_no) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw DataError("manifest line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

DatasetManifest load_manifest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");

  DatasetManifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kHeader)
        throw DataError("manifest '" + path + "': expected header '" + std::string(kHeader) +
                        "', got '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 8)
      throw DataError("manifest line " + std::to_string(line_no) + ": expected 8 fields, got " +
                      std::to_string(f.size()));
    ImageRecord rec;
    rec.path = f[0];
    // Labels outside {0,1} are kept verbatim so validate_manifest can report
    // them; a non-numeric label is structural and fails here.
    rec.label = parse_int(f[1], "label", line_no);
    rec.split = split_from_string(f[2]);
    rec.source = f[3];
    const bool any_crop = !f[4].empty() || !f[5].empty() || !f[6].empty() || !f[7].empty();
    const bool all_crop = !f[4].empty() && !f[5].empty() && !f[6].empty() && !f[7].empty();
    if (any_crop && !all_crop)
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": crop fields must be all set or all empty");
    if (all_crop)
      rec.crop = CropRect{parse_int(f[4], "crop_x", line_no), parse_int(f[5], "crop_y", line_no),
                          parse_int(f[6], "crop_w", line_no), parse_int(f[7], "crop_h", line_no)};
    m.records.push_back(std::move(rec));
  }
  return m;
}

void save_manifest_csv(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << kHeader << "\n";
  for (const auto& rec : m.records) {
    if (rec.path.find(',') != std::string::npos)
      throw DataError("manifest path contains a comma: '" + rec.path + "'");
    out << rec.path << ',' << rec.label << ',' << to_string(rec.split) << ',' << rec.source << ',';
    if (rec.crop)
      out << rec.crop->x << ',' << rec.crop->y << ',' << rec.crop->w << ',' << rec.crop->h;
    else
      out << ",,,";
    out << "\n";
  }
  if (!out) throw DataError("write failed for manifest '" + path + "'");
}

std::vector<ManifestViolation> validate_manifest(const DatasetManifest& m) {
  std::vector<ManifestViolation> violations;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const ImageRecord& rec = m.records[i];
    if (!seen.insert(rec.path).second)
      violations.push_back({i, rec.path, "duplicate_path", "path appears more than once"});
    if (rec.label != 0 && rec.label != 1)
      violations.push_back(
          {i, rec.path, "bad_label", "label must be 0 or 1, got " + std::to_string(rec.label)});
    if (!std::filesystem::exists(rec.path)) {
      violations.push_back({i, rec.path, "missing_file", "file does not exist"});
      continue;
    }
    int h = 0, w = 0;
    try {
      std::tie(h, w) = probe_image_size(rec.path);
    } catch (const DataError& e) {
      violations.push_back({i, rec.path, "unreadable", e.what()});
      continue;
    }
    if (rec.crop) {
      const CropRect& c = *rec.crop;
      if (c.w <= 0 || c.h <= 0 || c.x < 0 || c.y < 0 || c.x + c.w > w || c.y + c.h > h)
        violations.push_back({i, rec.path, "crop_out_of_bounds",
                              "crop (" + std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                                  std::to_string(c.w) + "," + std::to_string(c.h) +
                                  ") does not fit " + std::to_string(w) + "x" +
                                  std::to_string(h)});
    }
  }
  return violations;
}

void stratified_split(DatasetManifest& m, double train_fraction, SeededRng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("stratified_split: train_fraction must be in (0, 1)");

  for (int label : {0, 1}) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < m.records.size(); ++i)
      if (m.records[i].split != Split::test && m.records[i].label == label) pool.push_back(i);
    if (pool.size() < 2)
      throw DataError("stratified_split: class " + std::to_string(label) + " has " +
                      std::to_string(pool.size()) + " non-test records, need at least 2");
    rng.shuffle(pool.begin(), pool.end());
    const auto n_train =
        static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(pool.size())));
    for (std::size_t k = 0; k < pool.size(); ++k)
      m.records[pool[k]].split = k < n_train ? Split::train : Split::val;
  }
}

void write_tensor_cache(const std::string& base_path, const Tensor<float>& t) {
  static_assert(sizeof(float) == 4);
  {
    std::ofstream bin(base_path + ".bin", std::ios::binary);
    if (!bin) throw DataError("cannot write cache '" + base_path + ".bin'");
    bin.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.size())));
    if (!bin) throw DataError("write failed for cache '" + base_path + ".bin'");
  }
  nlohmann::ordered_json j;
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  j["shape"] = t.shape();
  std::ofstream meta(base_path + ".json", std::ios::binary);
  if (!meta) throw DataError("cannot write cache '" + base_path + ".json'");
  meta << j.dump(2) << "\n";
}

Tensor<float> read_tensor_cache(const std::string& base_path) {
  std::ifstream meta(base_path + ".json");
  if (!meta) throw DataError("cannot open cache '" + base_path + ".json'");
  nlohmann::ordered_json j;
  try {
    meta >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad cache metadata '" + base_path + ".json': " + e.what());
  }
  if (j.value("dtype", "") != "float32" || j.value("byte_order", "") != "little")
    throw DataError("cache '" + base_path + "': unsupported dtype or byte order");
  std::vector<int> shape = j.at("shape").get<std::vector<int>>();

  Tensor<float> t(shape);
  std::ifstream bin(base_path + ".bin", std::ios::binary);
  if (!bin) throw DataError("cannot open cache '" + base_path + ".bin'");
  bin.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.size())));
  if (bin.gcount() != static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(t.size())))
    throw DataError("cache '" + base_path + ".bin' is truncated");
  return t;
}

std::string cache_key(const ImageRecord& rec, int target_size) {
  std::string material = rec.path;
  material += '|';
  if (rec.crop) {
    material += std::to_string(rec.crop->x) + "," + std::to_string(rec.crop->y) + "," +
                std::to_string(rec.crop->w) + "," + std::to_string(rec.crop->h);
  }
  material += '|';
  material += std::to_string(target_size);

  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : material) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace covidnn
