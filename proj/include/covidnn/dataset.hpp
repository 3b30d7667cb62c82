#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "covidnn/image.hpp"
#include "covidnn/rng.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

// Class 1 is the positive (disease) class; class 0 is normal.
inline constexpr int kPositiveClass = 1;
inline constexpr int kNegativeClass = 0;

enum class Split { train, val, test, unassigned };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

enum class Modality { xray, ct };

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);

struct ImageRecord {
  std::string path;
  int label = 0;  // 0 or 1; anything else is reported by validate_manifest
  Split split = Split::unassigned;
  std::string source;
  std::optional<CropRect> crop;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  Modality modality = Modality::xray;
  int target_size = 224;
};

// CSV columns: path,label,split,source,crop_x,crop_y,crop_w,crop_h. Crop
// fields are either all present or all empty. Paths must not contain commas;
// no quoting is supported. Structural problems (wrong column count, bad
// header) throw DataError; content problems are left for validate_manifest.
DatasetManifest load_manifest_csv(const std::string& path);
void save_manifest_csv(const DatasetManifest& m, const std::string& path);

struct ManifestViolation {
  std::size_t record_index = 0;
  std::string path;
  std::string kind;  // missing_file, unreadable, bad_label, duplicate_path, crop_out_of_bounds
  std::string message;
};

// Checks every record against the filesystem: files exist and decode, labels
// are binary, paths are unique, crops fit inside their images. Violations are
// data, not exceptions.
std::vector<ManifestViolation> validate_manifest(const DatasetManifest& m);

// Reassigns every non-test record to train/val, stratified per class:
// round(fraction * class_count) of each class's records go to train after a
// class-wise shuffle. Throws DataError when a class has fewer than 2 members.
void stratified_split(DatasetManifest& m, double train_fraction, SeededRng& rng);

// Binary float32 tensor cache: <base>.bin holds little-endian values,
// <base>.json the dtype/shape metadata. Writes are byte-stable.
void write_tensor_cache(const std::string& base_path, const Tensor<float>& t);
Tensor<float> read_tensor_cache(const std::string& base_path);

// Stable key for one record's preprocessed tensor (FNV-1a over path, crop and
// target size).
std::string cache_key(const ImageRecord& rec, int target_size);

}  // namespace covidnn
