#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "covidnn/errors.hpp"
#include "covidnn/model.hpp"
#include "covidnn/tensor.hpp"

namespace covidnn {

// Archive layout, all integers little-endian:
//   bytes 0-3   magic "CVNW"
//   bytes 4-7   format version (u32) = 1
//   bytes 8-15  header length in bytes (u64)
//   16..        JSON header: array of {name, dtype, shape, offset}
//   then        payload: float32 tensor data, row-major, back to back
// dtype 0 is float32, the only defined code. Offsets are payload-relative.
inline constexpr char kArchiveMagic[4] = {'C', 'V', 'N', 'W'};
inline constexpr std::uint32_t kArchiveVersion = 1;

struct TensorEntry {
  std::string name;
  int dtype = 0;
  std::vector<int> shape;
  std::uint64_t offset = 0;

  std::uint64_t byte_size() const {
    return static_cast<std::uint64_t>(shape_size(shape)) * sizeof(float);
  }
};

struct NamedTensor {
  std::string name;
  const Tensor<float>* tensor = nullptr;
};

// Low-level writer/reader used by both the network save/load path and tests
// that craft archives directly.
void write_archive(const std::string& path, const std::vector<NamedTensor>& tensors);

struct ArchiveContents {
  std::vector<TensorEntry> entries;
  std::vector<float> payload;  // one flat buffer, entries index into it
};

ArchiveContents read_archive(const std::string& path);
std::vector<TensorEntry> read_archive_header(const std::string& path);

// Saves every persistent tensor of the network (weights, biases, batchnorm
// statistics) plus a "<path>.json" sidecar holding the model spec.
void save_weights(Network<float>& net, const std::string& path);

// Loads an archive produced by save_weights back into a structurally
// identical network. Every network tensor must be present with the exact
// shape; archive tensors unknown to the network are an error unless
// ignore_extra is set. The network is modified only after the whole archive
// has been validated.
void load_weights(Network<float>& net, const std::string& path, bool ignore_extra = false);

ModelSpec load_model_spec(const std::string& archive_path);

struct TensorCheck {
  std::string name;
  std::vector<int> expected_shape;
  std::vector<int> found_shape;  // empty when missing
  bool present = false;
  bool shape_ok = false;
  bool degenerate = false;  // all payload values identical
  double min = 0.0, max = 0.0, mean = 0.0;
};

struct VerifyReport {
  std::vector<TensorCheck> checks;
  std::vector<std::string> extra_tensors;
  bool all_ok = false;

  std::vector<std::string> flagged_names() const;
  nlohmann::ordered_json to_json() const;
};

// Audits an archive against the canonical pretrained topology for the
// transfer model: every expected tensor present, correctly shaped, with
// sane value statistics.
VerifyReport verify_pretrained_alexnet(const std::string& path);

}  // namespace covidnn
