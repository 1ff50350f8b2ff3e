#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nulite/tensor.hpp"

namespace nulite {

/// Thrown for dataset / file problems (bad magic, truncation, unreadable
/// inputs). The CLI maps it to exit code 2.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kImageSide = 256;
inline constexpr int kCropSide = 224;
inline constexpr std::size_t kImageBytes =
    static_cast<std::size_t>(kImageSide) * kImageSide * 3;  // 196608

/// 8-bit RGB raster, row-major, R,G,B interleaved. Arbitrary size until
/// resized; dataset samples are always 256x256.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};

struct Dataset {
  std::vector<Image> images;          // each exactly 256x256x3
  std::vector<std::uint16_t> labels;  // parallel to images
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  void validate() const;
};

struct AugmentConfig {
  int crop = kCropSide;
  float hflip_prob = 0.5f;
  bool enabled = true;
};

/// Random 224-crop + horizontal flip, pixels scaled to [0,1]. With
/// augmentation disabled this is the deterministic center crop at (16,16).
/// Returns a (1,3,224,224) tensor.
Tensor4 augment(const Image& image, const AugmentConfig& cfg, Rng& rng);

/// Stacks augment() over the given sample indices into a (B,3,224,224) batch.
Tensor4 make_batch(const Dataset& ds, const std::vector<int>& indices,
                   const AugmentConfig& cfg, Rng& rng);

// Native "NULD" dataset file, little-endian:
//   magic "NULD" | version u32=1 | sample_count u32 | class_count u32 |
//   per class: name length u16 + UTF-8 bytes |
//   per sample: label u16 + 196608 raw RGB bytes
void save_native(const Dataset& ds, const std::string& path);
Dataset load_native(const std::string& path);

/// One subdirectory per class; class index = lexicographic directory order,
/// files in lexicographic order. PPM (P6, 8-bit) is decoded natively; other
/// files raise DataError unless skip_undecodable is set.
Dataset ingest_folder(const std::string& root, bool skip_undecodable = false);

Image load_ppm(const std::string& path);
void save_ppm(const Image& image, const std::string& path);

/// Bilinear resize to 256x256 (aspect distortion permitted).
Image resize_to_dataset(const Image& image);

/// Synthetic classification set: each class gets a distinct dominant color
/// and geometric pattern, with per-sample jitter driven by `rng`.
Dataset synth_dataset(int classes, int per_class, Rng& rng);

}  // namespace nulite
