#pragma once

#include <stdexcept>
#include <string>

namespace covidnn {

// Error families map to CLI exit codes: config/usage = 1, data = 2, numeric = 3.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Model graph whose layer shapes cannot chain together.
class InvalidArchitectureError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

// Inference through a batchnorm layer that has never seen a batch and holds
// no loaded statistics.
class UninitializedStatsError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

enum class ArchiveErrorCode {
  bad_magic,
  bad_version,
  bad_header,
  bad_dtype,
  truncated_payload,
  overlapping_tensors,
  missing_tensor,
  extra_tensor,
  shape_mismatch,
  unnamed_parameter,
  io,
};

inline const char* to_string(ArchiveErrorCode c) {
  switch (c) {
    case ArchiveErrorCode::bad_magic: return "bad_magic";
    case ArchiveErrorCode::bad_version: return "bad_version";
    case ArchiveErrorCode::bad_header: return "bad_header";
    case ArchiveErrorCode::bad_dtype: return "bad_dtype";
    case ArchiveErrorCode::truncated_payload: return "truncated_payload";
    case ArchiveErrorCode::overlapping_tensors: return "overlapping_tensors";
    case ArchiveErrorCode::missing_tensor: return "missing_tensor";
    case ArchiveErrorCode::extra_tensor: return "extra_tensor";
    case ArchiveErrorCode::shape_mismatch: return "shape_mismatch";
    case ArchiveErrorCode::unnamed_parameter: return "unnamed_parameter";
    case ArchiveErrorCode::io: return "io";
  }
  return "unknown";
}

class ArchiveError : public DataError {
public:
  ArchiveError(ArchiveErrorCode code, const std::string& what)
      : DataError(std::string(to_string(code)) + ": " + what), code_(code) {}

  ArchiveErrorCode code() const { return code_; }

private:
  ArchiveErrorCode code_;
};

}  // namespace covidnn
