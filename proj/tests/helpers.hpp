#pragma once

// Shared fixtures for the CLI and acceptance suites: synthetic blob images,
// manifest writers, temp directories, subprocess capture.

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "covidnn/dataset.hpp"
#include "covidnn/image.hpp"
#include "covidnn/rng.hpp"

namespace testutil {

class TempDir {
public:
  explicit TempDir(const std::string& prefix) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (prefix + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& name = "") const {
    return name.empty() ? path_.string() : (path_ / name).string();
  }

private:
  std::filesystem::path path_;
};

// Gaussian blob on a contrasting background, quantized like an 8-bit scan.
// Class 1 is a bright blob on a dark field, class 0 the inverse.
inline covidnn::ImageU8 blob_image(covidnn::SeededRng& rng, bool bright, int side) {
  const double cy = rng.uniform(0.3, 0.7) * side;
  const double cx = rng.uniform(0.3, 0.7) * side;
  const double sig = rng.uniform(0.15, 0.25) * side;
  const double base = bright ? 0.15 : 0.85;
  const double amp = bright ? 0.7 : -0.7;
  covidnn::ImageU8 img;
  img.height = side;
  img.width = side;
  img.channels = 1;
  img.pixels.resize(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      double g = base + amp * std::exp(-d2 / (2.0 * sig * sig)) + rng.uniform(-0.02, 0.02);
      g = std::min(1.0, std::max(0.0, g));
      img.at(y, x, 0) = static_cast<std::uint8_t>(std::lround(g * 255.0));
    }
  return img;
}

// Writes count blob PNGs plus a manifest.csv into dir. Labels alternate 0/1
// by index; split_of picks each record's split (pass nullptr for unassigned).
inline std::string write_blob_dataset(const std::string& dir, int count, int side,
                                      std::uint64_t seed,
                                      const std::function<covidnn::Split(int)>& split_of = {}) {
  covidnn::SeededRng rng(seed);
  std::filesystem::create_directories(dir);
  covidnn::DatasetManifest m;
  for (int i = 0; i < count; ++i) {
    const int label = i % 2;
    const std::string name = "blob_" + std::to_string(i) + ".png";
    covidnn::write_png(dir + "/" + name, blob_image(rng, label == 1, side));
    covidnn::ImageRecord rec;
    rec.path = dir + "/" + name;
    rec.label = label;
    rec.split = split_of ? split_of(i) : covidnn::Split::unassigned;
    rec.source = "synthetic";
    m.records.push_back(std::move(rec));
  }
  const std::string manifest = dir + "/manifest.csv";
  covidnn::save_manifest_csv(m, manifest);
  return manifest;
}

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr merged
};

inline CmdResult run_cmd(const std::string& cmd) {
  CmdResult r;
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed for: " + cmd);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
