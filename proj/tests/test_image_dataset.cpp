#include <doctest.h>
#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "covidnn/dataset.hpp"
#include "covidnn/errors.hpp"
#include "covidnn/image.hpp"
#include "covidnn/rng.hpp"

using covidnn::CropRect;
using covidnn::DataError;
using covidnn::DatasetManifest;
using covidnn::ImageRecord;
using covidnn::ImageU8;
using covidnn::SeededRng;
using covidnn::Split;
using covidnn::Tensor;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           fs::path("covidnn_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

ImageU8 gradient_rgb(int h, int w) {
  ImageU8 img;
  img.height = h;
  img.width = w;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<std::uint8_t>((x * 255) / std::max(1, w - 1));
      img.at(y, x, 1) = static_cast<std::uint8_t>((y * 255) / std::max(1, h - 1));
      img.at(y, x, 2) = static_cast<std::uint8_t>((x + y) % 256);
    }
  return img;
}

ImageU8 constant_gray(int h, int w, std::uint8_t v) {
  ImageU8 img;
  img.height = h;
  img.width = w;
  img.channels = 1;
  img.pixels.assign(static_cast<std::size_t>(h) * w, v);
  return img;
}

}  // namespace

TEST_CASE("png write/decode round trip is lossless") {
  TempDir tmp;
  auto rgb = gradient_rgb(13, 9);
  covidnn::write_png(tmp.file("rgb.png"), rgb);
  auto back = covidnn::decode_image(tmp.file("rgb.png"));
  CHECK(back.height == 13);
  CHECK(back.width == 9);
  CHECK(back.channels == 3);
  CHECK(back.pixels == rgb.pixels);

  auto gray = constant_gray(5, 7, 77);
  gray.at(2, 3, 0) = 200;
  covidnn::write_png(tmp.file("gray.png"), gray);
  auto gback = covidnn::decode_image(tmp.file("gray.png"));
  CHECK(gback.channels == 1);
  CHECK(gback.pixels == gray.pixels);

  CHECK(covidnn::probe_image_size(tmp.file("rgb.png")) == std::pair<int, int>{13, 9});
}

TEST_CASE("jpeg round trip preserves flat regions within quantization error") {
  TempDir tmp;
  auto gray = constant_gray(16, 16, 128);
  covidnn::write_jpeg(tmp.file("g.jpg"), gray);
  auto back = covidnn::decode_image(tmp.file("g.jpg"));
  CHECK(back.height == 16);
  CHECK(back.width == 16);
  CHECK(back.channels == 1);
  for (auto p : back.pixels) CHECK(std::abs(int(p) - 128) <= 1);

  ImageU8 rgb;
  rgb.height = rgb.width = 8;
  rgb.channels = 3;
  rgb.pixels.resize(8 * 8 * 3);
  for (int i = 0; i < 64; ++i) {
    rgb.pixels[static_cast<std::size_t>(i) * 3 + 0] = 200;
    rgb.pixels[static_cast<std::size_t>(i) * 3 + 1] = 100;
    rgb.pixels[static_cast<std::size_t>(i) * 3 + 2] = 50;
  }
  covidnn::write_jpeg(tmp.file("c.jpg"), rgb);
  auto cback = covidnn::decode_image(tmp.file("c.jpg"));
  CHECK(cback.channels == 3);
  for (std::size_t i = 0; i < cback.pixels.size(); ++i)
    CHECK(std::abs(int(cback.pixels[i]) - int(rgb.pixels[i])) <= 3);

  CHECK(covidnn::probe_image_size(tmp.file("g.jpg")) == std::pair<int, int>{16, 16});
}

TEST_CASE("decoding rejects missing and corrupt files") {
  TempDir tmp;
  CHECK_THROWS_AS(covidnn::decode_image(tmp.file("absent.png")), DataError);
  std::ofstream(tmp.file("junk.png"), std::ios::binary) << "not an image at all";
  CHECK_THROWS_AS(covidnn::decode_image(tmp.file("junk.png")), DataError);
  CHECK_THROWS_AS(covidnn::probe_image_size(tmp.file("junk.png")), DataError);
}

TEST_CASE("crop cuts the requested window") {
  auto img = gradient_rgb(4, 4);
  auto sub = covidnn::crop(img, CropRect{1, 2, 3, 2});
  CHECK(sub.width == 3);
  CHECK(sub.height == 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) CHECK(sub.at(y, x, c) == img.at(y + 2, x + 1, c));

  CHECK_THROWS_AS(covidnn::crop(img, CropRect{2, 2, 3, 2}), DataError);
  CHECK_THROWS_AS(covidnn::crop(img, CropRect{0, 0, 0, 2}), DataError);
  CHECK_THROWS_AS(covidnn::crop(img, CropRect{-1, 0, 2, 2}), DataError);
}

TEST_CASE("u8 to float conversion divides by 255 exactly") {
  auto img = constant_gray(2, 2, 51);
  img.at(0, 1, 0) = 0;
  img.at(1, 0, 0) = 255;
  auto t = covidnn::image_to_tensor(img);
  CHECK(t.shape() == std::vector<int>{2, 2, 1});
  CHECK(t.at(0, 0, 0) == 51.0f / 255.0f);
  CHECK(t.at(0, 1, 0) == 0.0f);
  CHECK(t.at(1, 0, 0) == 1.0f);
}

TEST_CASE("bilinear resize: identity, constants, and the 2x2 checkerboard") {
  Tensor<float> checker({2, 2, 1}, {0.0f, 1.0f, 1.0f, 0.0f});
  auto same = covidnn::resize_bilinear(checker, 2, 2);
  CHECK(same == checker);

  auto c = covidnn::resize_bilinear(Tensor<float>::full({5, 3, 2}, 0.37f), 7, 11);
  for (auto v : c) CHECK(v == 0.37f);

  auto up = covidnn::resize_bilinear(checker, 3, 3);
  const float expected[9] = {0.0f, 0.5f, 1.0f, 0.5f, 0.5f, 0.5f, 1.0f, 0.5f, 0.0f};
  for (int i = 0; i < 9; ++i) CHECK(up[i] == doctest::Approx(expected[i]).epsilon(1e-6));

  // downscale of a row ramp samples rows 0.5 and 2.5
  Tensor<float> ramp({4, 4, 1});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ramp.at(y, x, 0) = static_cast<float>(y);
  auto down = covidnn::resize_bilinear(ramp, 2, 2);
  CHECK(down.at(0, 0, 0) == doctest::Approx(0.5f).epsilon(1e-6));
  CHECK(down.at(1, 1, 0) == doctest::Approx(2.5f).epsilon(1e-6));

  CHECK_THROWS_AS(covidnn::resize_bilinear(checker, 0, 3), std::invalid_argument);
}

TEST_CASE("channel replication copies gray into every channel") {
  Tensor<float> gray({2, 2, 1}, {0.1f, 0.2f, 0.3f, 0.4f});
  auto rgb = covidnn::replicate_channels(gray, 3);
  CHECK(rgb.shape() == std::vector<int>{2, 2, 3});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) CHECK(rgb.at(y, x, c) == gray.at(y, x, 0));

  auto pass = covidnn::replicate_channels(rgb, 3);
  CHECK(pass == rgb);
}

TEST_CASE("load_and_preprocess chains decode, crop, scale and resize") {
  TempDir tmp;
  auto img = constant_gray(10, 8, 128);
  covidnn::write_png(tmp.file("g.png"), img);
  auto t = covidnn::load_and_preprocess(tmp.file("g.png"), nullptr, 4, 4);
  CHECK(t.shape() == std::vector<int>{4, 4, 3});
  for (auto v : t) CHECK(v == 128.0f / 255.0f);

  // crop away everything but a bright corner block
  auto two_tone = constant_gray(8, 8, 10);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) two_tone.at(y, x, 0) = 250;
  covidnn::write_png(tmp.file("t.png"), two_tone);
  CropRect rect{0, 0, 4, 4};
  auto tc = covidnn::load_and_preprocess(tmp.file("t.png"), &rect, 2, 2);
  for (auto v : tc) CHECK(v == 250.0f / 255.0f);
}

TEST_CASE("manifest csv round trip keeps every field") {
  TempDir tmp;
  DatasetManifest m;
  m.records.push_back({"a/one.png", 0, Split::train, "siteA", std::nullopt});
  m.records.push_back({"a/two.png", 1, Split::test, "siteB", CropRect{3, 4, 100, 90}});
  m.records.push_back({"b/three.jpg", 1, Split::unassigned, "", std::nullopt});
  covidnn::save_manifest_csv(m, tmp.file("m.csv"));

  auto back = covidnn::load_manifest_csv(tmp.file("m.csv"));
  REQUIRE(back.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.records[i].path == m.records[i].path);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(back.records[i].split == m.records[i].split);
    CHECK(back.records[i].source == m.records[i].source);
    CHECK(back.records[i].crop.has_value() == m.records[i].crop.has_value());
  }
  CHECK(back.records[1].crop->x == 3);
  CHECK(back.records[1].crop->w == 100);
}

TEST_CASE("manifest csv structural errors") {
  TempDir tmp;
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(tmp.file(name), std::ios::binary) << body;
    return tmp.file(name);
  };

  CHECK_THROWS_AS(covidnn::load_manifest_csv(tmp.file("absent.csv")), DataError);
  CHECK_THROWS_AS(
      covidnn::load_manifest_csv(write("h.csv", "path,label\nx.png,0\n")), DataError);
  CHECK_THROWS_AS(covidnn::load_manifest_csv(write(
                      "c.csv", "path,label,split,source,crop_x,crop_y,crop_w,crop_h\nx.png,0\n")),
                  DataError);
  CHECK_THROWS_AS(
      covidnn::load_manifest_csv(write(
          "l.csv", "path,label,split,source,crop_x,crop_y,crop_w,crop_h\nx.png,yes,train,,,,,\n")),
      DataError);
  CHECK_THROWS_AS(
      covidnn::load_manifest_csv(write(
          "p.csv", "path,label,split,source,crop_x,crop_y,crop_w,crop_h\nx.png,0,train,,1,2,,\n")),
      DataError);

  // CRLF line endings, blank lines and out-of-range labels all load
  auto ok = covidnn::load_manifest_csv(write(
      "ok.csv",
      "path,label,split,source,crop_x,crop_y,crop_w,crop_h\r\n\r\nx.png,7,val,s,,,,\r\n"));
  REQUIRE(ok.records.size() == 1);
  CHECK(ok.records[0].label == 7);
  CHECK(ok.records[0].split == Split::val);
}

TEST_CASE("manifest validation reports each violation kind") {
  TempDir tmp;
  auto good = constant_gray(6, 6, 90);
  covidnn::write_png(tmp.file("good.png"), good);
  std::ofstream(tmp.file("junk.png"), std::ios::binary) << "garbage";

  DatasetManifest m;
  m.records.push_back({tmp.file("good.png"), 0, Split::train, "", std::nullopt});
  m.records.push_back({tmp.file("good.png"), 1, Split::train, "", std::nullopt});  // duplicate
  m.records.push_back({tmp.file("gone.png"), 1, Split::train, "", std::nullopt});
  m.records.push_back({tmp.file("junk.png"), 0, Split::train, "", std::nullopt});
  m.records.push_back({tmp.file("good.png"), 5, Split::train, "", std::nullopt});  // bad label
  m.records.push_back(
      {tmp.file("good.png"), 1, Split::train, "", CropRect{4, 4, 4, 4}});  // crop too big

  auto v = covidnn::validate_manifest(m);
  auto count = [&](const std::string& kind) {
    int n = 0;
    for (const auto& x : v)
      if (x.kind == kind) ++n;
    return n;
  };
  CHECK(count("duplicate_path") == 3);  // records 1, 4 and 5 repeat record 0's path
  CHECK(count("missing_file") == 1);
  CHECK(count("unreadable") == 1);
  CHECK(count("bad_label") == 1);
  CHECK(count("crop_out_of_bounds") == 1);

  DatasetManifest clean;
  clean.records.push_back({tmp.file("good.png"), 0, Split::train, "", CropRect{1, 1, 5, 5}});
  CHECK(covidnn::validate_manifest(clean).empty());
}

TEST_CASE("stratified split divides each class by the train fraction") {
  DatasetManifest m;
  for (int i = 0; i < 120; ++i)
    m.records.push_back({"img" + std::to_string(i) + ".png", i < 60 ? 0 : 1, Split::unassigned,
                         "", std::nullopt});
  SeededRng rng(5);
  covidnn::stratified_split(m, 0.5, rng);

  int train0 = 0, train1 = 0, val0 = 0, val1 = 0;
  for (const auto& r : m.records) {
    if (r.split == Split::train) (r.label == 0 ? train0 : train1)++;
    if (r.split == Split::val) (r.label == 0 ? val0 : val1)++;
  }
  CHECK(train0 == 30);
  CHECK(train1 == 30);
  CHECK(val0 == 30);
  CHECK(val1 == 30);

  // same seed reproduces the exact assignment
  DatasetManifest m2 = m;
  for (auto& r : m2.records) r.split = Split::unassigned;
  SeededRng rng2(5);
  covidnn::stratified_split(m2, 0.5, rng2);
  bool identical = true;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    identical = identical && m.records[i].split == m2.records[i].split;
  CHECK(identical);

  DatasetManifest m3 = m2;
  for (auto& r : m3.records) r.split = Split::unassigned;
  SeededRng rng3(6);
  covidnn::stratified_split(m3, 0.5, rng3);
  bool differs = false;
  for (std::size_t i = 0; i < m2.records.size(); ++i)
    differs = differs || m2.records[i].split != m3.records[i].split;
  CHECK(differs);
}

TEST_CASE("stratified split leaves test records alone and checks inputs") {
  DatasetManifest m;
  for (int i = 0; i < 8; ++i)
    m.records.push_back({"i" + std::to_string(i), i % 2, Split::unassigned, "", std::nullopt});
  m.records.push_back({"held_out", 1, Split::test, "", std::nullopt});
  SeededRng rng(1);
  covidnn::stratified_split(m, 0.75, rng);
  CHECK(m.records.back().split == Split::test);
  int train = 0, val = 0;
  for (const auto& r : m.records) {
    if (r.split == Split::train) ++train;
    if (r.split == Split::val) ++val;
  }
  CHECK(train == 6);  // round(0.75 * 4) per class
  CHECK(val == 2);

  SeededRng r2(1);
  CHECK_THROWS_AS(covidnn::stratified_split(m, 0.0, r2), std::invalid_argument);
  CHECK_THROWS_AS(covidnn::stratified_split(m, 1.0, r2), std::invalid_argument);

  DatasetManifest lopsided;
  lopsided.records.push_back({"only", 1, Split::unassigned, "", std::nullopt});
  lopsided.records.push_back({"a", 0, Split::unassigned, "", std::nullopt});
  lopsided.records.push_back({"b", 0, Split::unassigned, "", std::nullopt});
  CHECK_THROWS_AS(covidnn::stratified_split(lopsided, 0.5, r2), DataError);
}

TEST_CASE("tensor cache round trips bytes and metadata") {
  TempDir tmp;
  SeededRng rng(44);
  Tensor<float> t({3, 4, 2});
  for (auto& v : t) v = static_cast<float>(rng.uniform(-5.0, 5.0));
  covidnn::write_tensor_cache(tmp.file("t"), t);
  CHECK(fs::exists(tmp.file("t") + ".bin"));
  CHECK(fs::exists(tmp.file("t") + ".json"));
  auto back = covidnn::read_tensor_cache(tmp.file("t"));
  CHECK(back == t);

  // truncated payload is detected
  fs::resize_file(tmp.file("t") + ".bin", 10);
  CHECK_THROWS_AS(covidnn::read_tensor_cache(tmp.file("t")), DataError);
  CHECK_THROWS_AS(covidnn::read_tensor_cache(tmp.file("absent")), DataError);
}

TEST_CASE("cache keys are stable and sensitive to path, crop and size") {
  ImageRecord rec{"x/y.png", 1, Split::train, "s", std::nullopt};
  auto k1 = covidnn::cache_key(rec, 224);
  CHECK(k1 == covidnn::cache_key(rec, 224));
  CHECK(k1.size() == 16);

  auto k2 = covidnn::cache_key(rec, 227);
  CHECK(k1 != k2);
  ImageRecord other = rec;
  other.path = "x/z.png";
  CHECK(covidnn::cache_key(other, 224) != k1);
  ImageRecord cropped = rec;
  cropped.crop = CropRect{0, 0, 5, 5};
  CHECK(covidnn::cache_key(cropped, 224) != k1);
}
