#include "covidnn/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include <jerror.h>
#include <jpeglib.h>

#include "covidnn/errors.hpp"

namespace covidnn {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open '" + path + "'");
  return f;
}

enum class Format { png, jpeg };

Format sniff_format(std::FILE* f, const std::string& path) {
  unsigned char magic[8] = {};
  std::size_t got = std::fread(magic, 1, sizeof(magic), f);
  std::rewind(f);
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) return Format::png;
  if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return Format::jpeg;
  throw DataError("'" + path + "' is neither PNG nor JPEG");
}

[[noreturn]] void png_error_to_exception(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg ? msg : "png error";
  longjmp(png_jmpbuf(png), 1);
}

void png_warning_ignore(png_structp, png_const_charp) {}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::string error;

  PngReader() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_error_to_exception,
                                 png_warning_ignore);
    if (png) info = png_create_info_struct(png);
  }
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;
};

ImageU8 decode_png(std::FILE* f, const std::string& path, bool header_only, int* out_h,
                   int* out_w) {
  PngReader r;
  if (!r.png || !r.info) throw DataError("png reader allocation failed");
  if (setjmp(png_jmpbuf(r.png)))
    throw DataError("corrupt png '" + path + "': " + r.error);

  png_init_io(r.png, f);
  png_read_info(r.png, r.info);

  png_uint_32 w = 0, h = 0;
  int bit_depth = 0, color_type = 0;
  png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (w == 0 || h == 0) throw DataError("zero-dimension png '" + path + "'");
  if (header_only) {
    *out_h = static_cast<int>(h);
    *out_w = static_cast<int>(w);
    return {};
  }

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  if (bit_depth == 16) png_set_strip_16(r.png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(r.png, r.info, PNG_INFO_tRNS))
    png_set_strip_alpha(r.png);
  if (png_get_interlace_type(r.png, r.info) != PNG_INTERLACE_NONE)
    png_set_interlace_handling(r.png);
  png_read_update_info(r.png, r.info);

  const int channels = png_get_channels(r.png, r.info);
  if (channels != 1 && channels != 3)
    throw DataError("png '" + path + "': unsupported channel count " + std::to_string(channels));

  ImageU8 img;
  img.height = static_cast<int>(h);
  img.width = static_cast<int>(w);
  img.channels = channels;
  img.pixels.resize(static_cast<std::size_t>(h) * w * channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX] = {};
};

void jpeg_error_to_longjmp(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  longjmp(err->jump, 1);
}

ImageU8 decode_jpeg(std::FILE* f, const std::string& path, bool header_only, int* out_h,
                    int* out_w) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_to_longjmp;
  jpeg_create_decompress(&cinfo);
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("corrupt jpeg '" + path + "': " + err.message);
  }

  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  if (header_only) {
    *out_h = static_cast<int>(cinfo.image_height);
    *out_w = static_cast<int>(cinfo.image_width);
    jpeg_destroy_decompress(&cinfo);
    return {};
  }

  cinfo.out_color_space = cinfo.jpeg_color_space == JCS_GRAYSCALE ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int channels = cinfo.output_components;
  if (channels != 1 && channels != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("jpeg '" + path + "': unsupported channel count " + std::to_string(channels));
  }

  ImageU8 img;
  img.height = static_cast<int>(cinfo.output_height);
  img.width = static_cast<int>(cinfo.output_width);
  img.channels = channels;
  if (img.height == 0 || img.width == 0) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("zero-dimension jpeg '" + path + "'");
  }
  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() +
                   static_cast<std::size_t>(cinfo.output_scanline) * img.width * channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

ImageU8 decode_image(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  return sniff_format(f.get(), path) == Format::png ? decode_png(f.get(), path, false, nullptr,
                                                                nullptr)
                                                    : decode_jpeg(f.get(), path, false, nullptr,
                                                                  nullptr);
}

std::pair<int, int> probe_image_size(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  int h = 0, w = 0;
  if (sniff_format(f.get(), path) == Format::png)
    decode_png(f.get(), path, true, &h, &w);
  else
    decode_jpeg(f.get(), path, true, &h, &w);
  return {h, w};
}

void write_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: channels must be 1 or 3");
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * img.channels)
    throw std::invalid_argument("write_png: pixel buffer size mismatch");
  FilePtr f = open_file(path, "wb");

  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error,
                                            png_error_to_exception, png_warning_ignore);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png writer allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png write failed for '" + path + "': " + error);
  }

  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() +
                                             static_cast<std::size_t>(y) * img.width *
                                                 img.channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_jpeg(const std::string& path, const ImageU8& img, int quality) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_jpeg: channels must be 1 or 3");
  FilePtr f = open_file(path, "wb");

  jpeg_compress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_to_longjmp;
  jpeg_create_compress(&cinfo);
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    throw DataError("jpeg write failed for '" + path + "': " + err.message);
  }

  jpeg_stdio_dest(&cinfo, f.get());
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = img.channels;
  cinfo.in_color_space = img.channels == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(img.pixels.data() +
                                        static_cast<std::size_t>(cinfo.next_scanline) *
                                            img.width * img.channels);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
}

ImageU8 crop(const ImageU8& img, const CropRect& rect) {
  if (rect.w <= 0 || rect.h <= 0)
    throw DataError("crop: empty rectangle " + std::to_string(rect.w) + "x" +
                    std::to_string(rect.h));
  if (rect.x < 0 || rect.y < 0 || rect.x + rect.w > img.width || rect.y + rect.h > img.height)
    throw DataError("crop: rectangle (" + std::to_string(rect.x) + "," + std::to_string(rect.y) +
                    "," + std::to_string(rect.w) + "," + std::to_string(rect.h) +
                    ") outside " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    " image");
  ImageU8 out;
  out.height = rect.h;
  out.width = rect.w;
  out.channels = img.channels;
  out.pixels.resize(static_cast<std::size_t>(rect.h) * rect.w * img.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(rect.w) * img.channels;
  for (int y = 0; y < rect.h; ++y)
    std::memcpy(out.pixels.data() + static_cast<std::size_t>(y) * row_bytes,
                img.pixels.data() +
                    ((static_cast<std::size_t>(rect.y + y) * img.width) + rect.x) * img.channels,
                row_bytes);
  return out;
}

Tensor<float> image_to_tensor(const ImageU8& img) {
  if (img.height < 1 || img.width < 1) throw DataError("image_to_tensor: empty image");
  Tensor<float> t({img.height, img.width, img.channels});
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    t[static_cast<std::int64_t>(i)] = static_cast<float>(img.pixels[i]) / 255.0f;
  return t;
}

Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w) {
  img.require_rank(3);
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: empty output");
  const int h = img.extent(0), w = img.extent(1), c = img.extent(2);
  if (out_h == h && out_w == w) return img;

  Tensor<float> out({out_h, out_w, c});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  const float* in = img.data();
  float* o = out.data();
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    int y0 = static_cast<int>(fy);
    float ty;
    int y1;
    if (y0 >= h - 1) {
      y0 = y1 = h - 1;
      ty = 0.0f;
    } else {
      y1 = y0 + 1;
      ty = static_cast<float>(fy - y0);
    }
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      int x0 = static_cast<int>(fx);
      float tx;
      int x1;
      if (x0 >= w - 1) {
        x0 = x1 = w - 1;
        tx = 0.0f;
      } else {
        x1 = x0 + 1;
        tx = static_cast<float>(fx - x0);
      }
      const float* r0 = in + (static_cast<std::int64_t>(y0) * w) * c;
      const float* r1 = in + (static_cast<std::int64_t>(y1) * w) * c;
      float* dst = o + (static_cast<std::int64_t>(oy) * out_w + ox) * c;
      for (int ch = 0; ch < c; ++ch) {
        // lerp as a + t*(b - a): exact when a == b, so flat regions never drift
        const float a = r0[x0 * c + ch] + tx * (r0[x1 * c + ch] - r0[x0 * c + ch]);
        const float b = r1[x0 * c + ch] + tx * (r1[x1 * c + ch] - r1[x0 * c + ch]);
        dst[ch] = a + ty * (b - a);
      }
    }
  }
  return out;
}

Tensor<float> replicate_channels(const Tensor<float>& img, int channels) {
  img.require_rank(3);
  if (img.extent(2) == channels) return img;
  if (img.extent(2) != 1)
    throw std::invalid_argument("replicate_channels: input must have 1 or " +
                                std::to_string(channels) + " channels, got " +
                                std::to_string(img.extent(2)));
  const int h = img.extent(0), w = img.extent(1);
  Tensor<float> out({h, w, channels});
  const float* in = img.data();
  float* o = out.data();
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p)
    for (int c = 0; c < channels; ++c) o[p * channels + c] = in[p];
  return out;
}

Tensor<float> load_and_preprocess(const std::string& path, const CropRect* crop_rect,
                                  int target_h, int target_w) {
  ImageU8 img = decode_image(path);
  if (crop_rect) img = crop(img, *crop_rect);
  Tensor<float> t = image_to_tensor(img);
  t = resize_bilinear(t, target_h, target_w);
  return replicate_channels(t, 3);
}

}  // namespace covidnn
