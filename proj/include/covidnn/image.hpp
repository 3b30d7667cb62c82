#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covidnn/tensor.hpp"

namespace covidnn {

// 8-bit interleaved image, 1 (grayscale) or 3 (RGB) channels.
struct ImageU8 {
  int height = 0, width = 0, channels = 0;
  std::vector<std::uint8_t> pixels;  // height * width * channels, row-major

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct CropRect {
  int x = 0, y = 0, w = 0, h = 0;
};

// PNG or JPEG by magic bytes; palette/16-bit/alpha PNGs are normalized to
// 8-bit gray or RGB. Throws DataError on unreadable or corrupt files.
ImageU8 decode_image(const std::string& path);

// Header-only read; returns {height, width}.
std::pair<int, int> probe_image_size(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);
void write_jpeg(const std::string& path, const ImageU8& img, int quality = 90);

ImageU8 crop(const ImageU8& img, const CropRect& rect);

// uint8 -> float32 in [0, 1] (exact division by 255), H x W x C.
Tensor<float> image_to_tensor(const ImageU8& img);

// Bilinear, half-pixel centers, edges clamped. An exact no-op when the size
// is unchanged, and constant images stay constant bit-for-bit.
Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w);

// Replicates a single channel to n copies; 3-channel input passes through.
Tensor<float> replicate_channels(const Tensor<float>& img, int channels);

// decode -> optional crop -> [0,1] floats -> resize -> 3 channels.
Tensor<float> load_and_preprocess(const std::string& path, const CropRect* crop_rect,
                                  int target_h, int target_w);

}  // namespace covidnn
