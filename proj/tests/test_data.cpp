#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "nulite/data.hpp"

using namespace nulite;
namespace fs = std::filesystem;

namespace {

Image gradient_image() {
  Image im{kImageSide, kImageSide, std::vector<std::uint8_t>(kImageBytes)};
  for (int y = 0; y < kImageSide; ++y)
    for (int x = 0; x < kImageSide; ++x) {
      std::uint8_t* p = &im.rgb[(static_cast<std::size_t>(y) * kImageSide + x) * 3];
      p[0] = static_cast<std::uint8_t>(x);
      p[1] = static_cast<std::uint8_t>(y);
      p[2] = static_cast<std::uint8_t>((x + y) / 2);
    }
  return im;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("disabled augmentation is the deterministic center crop") {
  Image im = gradient_image();
  AugmentConfig cfg;
  cfg.enabled = false;
  Rng rng(1);
  Tensor4 a = augment(im, cfg, rng);
  Tensor4 b = augment(im, cfg, rng);
  REQUIRE(a.dims() == Dims4{1, 3, 224, 224});
  CHECK(a.vec() == b.vec());
  // center crop origin is (16,16): output (0,0) reads pixel (16,16)
  CHECK(a.at(0, 0, 0, 0) == doctest::Approx(16.0 / 255.0));
  CHECK(a.at(0, 1, 0, 0) == doctest::Approx(16.0 / 255.0));
  CHECK(a.at(0, 0, 10, 20) == doctest::Approx(36.0 / 255.0));  // x = 16+20
  CHECK(a.at(0, 1, 10, 20) == doctest::Approx(26.0 / 255.0));  // y = 16+10
}

TEST_CASE("augmentation of a constant image is constant in [0,1]") {
  Image im{kImageSide, kImageSide,
           std::vector<std::uint8_t>(kImageBytes, 128)};
  AugmentConfig cfg;
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor4 t = augment(im, cfg, rng);
    for (std::int64_t i = 0; i < t.size(); ++i)
      CHECK(t.data()[i] == doctest::Approx(128.0 / 255.0));
  }
}

TEST_CASE("augment output stays in [0,1] and flip is an involution") {
  Image im = gradient_image();
  AugmentConfig cfg;
  Rng rng(3);
  Tensor4 t = augment(im, cfg, rng);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    CHECK(t.data()[i] >= 0.0f);
    CHECK(t.data()[i] <= 1.0f);
  }

  // crop=256 removes translation; hflip_prob=1 forces the flip, so flipping
  // the flipped tensor restores the center-crop reference
  AugmentConfig full;
  full.crop = kImageSide;
  full.hflip_prob = 1.0f;
  Rng r2(4);
  Tensor4 flipped = augment(im, full, r2);
  AugmentConfig none;
  none.crop = kImageSide;
  none.enabled = false;
  Rng r3(5);
  Tensor4 ref = augment(im, none, r3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < kImageSide; ++y)
      for (int x = 0; x < kImageSide; x += 37)
        CHECK(flipped.at(0, c, y, x) == ref.at(0, c, y, kImageSide - 1 - x));
}

TEST_CASE("augment crop offsets cover the full 0..32 range") {
  // statistical coverage: with 10^4 draws every offset must appear, which
  // fails if the generator biases or truncates the [0, slack] range
  Image im = gradient_image();
  AugmentConfig cfg;
  cfg.hflip_prob = 0.0f;
  Rng rng(6);
  std::set<int> seen_x, seen_y;
  for (int i = 0; i < 10000 && (seen_x.size() < 33 || seen_y.size() < 33); ++i) {
    Tensor4 t = augment(im, cfg, rng);
    // channel 0 stores x+ox, channel 1 stores y+oy at output (0,0)
    seen_x.insert(static_cast<int>(t.at(0, 0, 0, 0) * 255.0f + 0.5f));
    seen_y.insert(static_cast<int>(t.at(0, 1, 0, 0) * 255.0f + 0.5f));
  }
  CHECK(seen_x.size() == 33);
  CHECK(seen_y.size() == 33);
}

TEST_CASE("make_batch stacks augmented samples") {
  Rng gen(7);
  Dataset ds = synth_dataset(2, 3, gen);
  AugmentConfig cfg;
  cfg.enabled = false;
  Rng rng(8);
  Tensor4 batch = make_batch(ds, {0, 3, 5}, cfg, rng);
  REQUIRE(batch.dims() == Dims4{3, 3, 224, 224});
  Rng rng2(9);
  Tensor4 one = augment(ds.images[3], cfg, rng2);
  for (int c = 0; c < 3; ++c)
    CHECK(batch.at(1, c, 100, 100) == one.at(0, c, 100, 100));
}

TEST_CASE("NULD round-trip preserves every byte") {
  Rng gen(10);
  Dataset ds = synth_dataset(3, 2, gen);
  TempDir dir("nulite_test_nuld");
  const std::string path = (dir.path / "set.nuld").string();
  save_native(ds, path);
  Dataset back = load_native(path);
  REQUIRE(back.size() == ds.size());
  CHECK(back.class_names == ds.class_names);
  CHECK(back.labels == ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i)
    CHECK(back.images[i].rgb == ds.images[i].rgb);

  // save -> load -> save is byte-identical
  const std::string path2 = (dir.path / "set2.nuld").string();
  save_native(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
}

TEST_CASE("NULD corruption is reported") {
  Rng gen(11);
  Dataset ds = synth_dataset(2, 1, gen);
  TempDir dir("nulite_test_nuld_bad");
  const std::string path = (dir.path / "set.nuld").string();
  save_native(ds, path);

  // clobber the magic
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_WITH_AS(load_native(path),
                       doctest::Contains("bad magic"), DataError);

  // truncate mid-sample
  save_native(ds, path);
  fs::resize_file(path, fs::file_size(path) - 1000);
  CHECK_THROWS_WITH_AS(load_native(path),
                       doctest::Contains("truncated"), DataError);

  CHECK_THROWS_AS(load_native((dir.path / "missing.nuld").string()), DataError);
}

TEST_CASE("PPM round-trip and parser edge cases") {
  TempDir dir("nulite_test_ppm");
  Image im = gradient_image();
  const std::string path = (dir.path / "img.ppm").string();
  save_ppm(im, path);
  Image back = load_ppm(path);
  CHECK(back.width == im.width);
  CHECK(back.height == im.height);
  CHECK(back.rgb == im.rgb);

  // comments in the header are skipped
  const std::string cpath = (dir.path / "comment.ppm").string();
  {
    std::ofstream os(cpath, std::ios::binary);
    os << "P6\n# a comment line\n2 1\n# another\n255\n";
    const unsigned char px[6] = {1, 2, 3, 4, 5, 6};
    os.write(reinterpret_cast<const char*>(px), 6);
  }
  Image c = load_ppm(cpath);
  CHECK(c.width == 2);
  CHECK(c.height == 1);
  CHECK(c.rgb == std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6});

  // non-P6 and truncated files raise DataError
  const std::string bad = (dir.path / "bad.ppm").string();
  {
    std::ofstream os(bad, std::ios::binary);
    os << "P3\n2 1\n255\n1 2 3 4 5 6\n";
  }
  CHECK_THROWS_AS(load_ppm(bad), DataError);
  const std::string trunc = (dir.path / "trunc.ppm").string();
  {
    std::ofstream os(trunc, std::ios::binary);
    os << "P6\n4 4\n255\nxy";
  }
  CHECK_THROWS_AS(load_ppm(trunc), DataError);
}

TEST_CASE("resize_to_dataset: identity, upscale constancy, corner mapping") {
  Image im = gradient_image();
  Image same = resize_to_dataset(im);
  CHECK(same.rgb == im.rgb);

  Image tiny{2, 2, {10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10}};
  Image up = resize_to_dataset(tiny);
  CHECK(up.width == kImageSide);
  CHECK(up.height == kImageSide);
  for (std::uint8_t v : up.rgb) CHECK(v == 10);

  // non-square input is distorted onto the square grid
  Image wide{8, 2, std::vector<std::uint8_t>(8 * 2 * 3, 200)};
  Image sq = resize_to_dataset(wide);
  CHECK(sq.width == kImageSide);
  for (std::uint8_t v : sq.rgb) CHECK(v == 200);
}

TEST_CASE("ingest_folder assigns labels in lexicographic class order") {
  TempDir dir("nulite_test_ingest");
  Rng gen(12);
  Dataset src = synth_dataset(2, 3, gen);
  fs::create_directories(dir.path / "b_second");
  fs::create_directories(dir.path / "a_first");
  for (int i = 0; i < 3; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "img%02d.ppm", i);
    save_ppm(src.images[static_cast<std::size_t>(i)],
             (dir.path / "a_first" / name).string());
    save_ppm(src.images[static_cast<std::size_t>(3 + i)],
             (dir.path / "b_second" / name).string());
  }
  Dataset ds = ingest_folder(dir.path.string());
  CHECK(ds.class_names == std::vector<std::string>{"a_first", "b_second"});
  CHECK(ds.labels == std::vector<std::uint16_t>{0, 0, 0, 1, 1, 1});
  CHECK(ds.size() == 6);
  CHECK(ds.images[0].rgb == src.images[0].rgb);
  CHECK(ds.images[3].rgb == src.images[3].rgb);
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("ingest_folder error handling and skip flag") {
  TempDir dir("nulite_test_ingest_err");
  CHECK_THROWS_AS(ingest_folder((dir.path / "nope").string()), DataError);
  // no class subdirectories
  CHECK_THROWS_AS(ingest_folder(dir.path.string()), DataError);

  fs::create_directories(dir.path / "classA");
  // only an undecodable file: strict mode throws, skip mode still errors
  // because the class ends up empty
  std::ofstream(dir.path / "classA" / "junk.txt") << "not an image";
  CHECK_THROWS_AS(ingest_folder(dir.path.string(), false), DataError);
  CHECK_THROWS_AS(ingest_folder(dir.path.string(), true), DataError);

  // adding one good PPM: skip mode succeeds with 1 sample, strict still throws
  Rng gen(13);
  Dataset src = synth_dataset(2, 1, gen);
  save_ppm(src.images[0], (dir.path / "classA" / "good.ppm").string());
  CHECK_THROWS_AS(ingest_folder(dir.path.string(), false), DataError);
  Dataset ds = ingest_folder(dir.path.string(), true);
  CHECK(ds.size() == 1);
  CHECK(ds.class_names == std::vector<std::string>{"classA"});
}

TEST_CASE("synth_dataset structure and determinism") {
  Rng a(99), b(99);
  Dataset d1 = synth_dataset(50, 4, a);
  Dataset d2 = synth_dataset(50, 4, b);
  CHECK(d1.size() == 200);
  CHECK(d1.num_classes() == 50);
  CHECK(d1.class_names[0] == "class_000");
  CHECK(d1.class_names[49] == "class_049");
  CHECK_NOTHROW(d1.validate());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    CHECK(d1.labels[i] == static_cast<std::uint16_t>(i / 4));
    CHECK(d1.images[i].rgb == d2.images[i].rgb);
  }
  // different seed gives different pixels
  Rng c(100);
  Dataset d3 = synth_dataset(50, 4, c);
  CHECK(d3.images[0].rgb != d1.images[0].rgb);

  CHECK_THROWS_AS(synth_dataset(1, 4, a), std::invalid_argument);
  CHECK_THROWS_AS(synth_dataset(2, 0, a), std::invalid_argument);
}
