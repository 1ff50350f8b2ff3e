#include "nulite/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace nulite {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (labels.size() != images.size()) {
    throw DataError("dataset: label/image count mismatch");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    if (im.width != kImageSide || im.height != kImageSide ||
        im.rgb.size() != kImageBytes) {
      throw DataError("dataset: sample " + std::to_string(i) +
                      " is not 256x256x3");
    }
    if (labels[i] >= class_names.size()) {
      throw DataError("dataset: sample " + std::to_string(i) +
                      " label out of range");
    }
  }
}

// -- Augmentation ------------------------------------------------------------

Tensor4 augment(const Image& image, const AugmentConfig& cfg, Rng& rng) {
  if (image.width != kImageSide || image.height != kImageSide ||
      image.rgb.size() != kImageBytes) {
    throw std::invalid_argument("augment: image must be 256x256x3");
  }
  if (cfg.crop < 1 || cfg.crop > kImageSide) {
    throw std::invalid_argument("augment: crop out of range");
  }
  const int slack = kImageSide - cfg.crop;
  int oy = slack / 2, ox = slack / 2;
  bool flip = false;
  if (cfg.enabled) {
    // fixed draw order: oy, ox, flip
    oy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(slack) + 1));
    ox = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(slack) + 1));
    flip = rng.uniform() < cfg.hflip_prob;
  }

  Tensor4 out = Tensor4::zeros({1, 3, cfg.crop, cfg.crop});
  constexpr float scale = 1.0f / 255.0f;
  for (int c = 0; c < 3; ++c) {
    float* dst = out.data() + static_cast<std::int64_t>(c) * cfg.crop * cfg.crop;
    for (int y = 0; y < cfg.crop; ++y) {
      const std::uint8_t* row =
          image.rgb.data() +
          (static_cast<std::size_t>(oy + y) * kImageSide + ox) * 3 + c;
      for (int x = 0; x < cfg.crop; ++x) {
        const int sx = flip ? cfg.crop - 1 - x : x;
        dst[static_cast<std::int64_t>(y) * cfg.crop + x] =
            static_cast<float>(row[static_cast<std::size_t>(sx) * 3]) * scale;
      }
    }
  }
  return out;
}

Tensor4 make_batch(const Dataset& ds, const std::vector<int>& indices,
                   const AugmentConfig& cfg, Rng& rng) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  Tensor4 batch =
      Tensor4::zeros({static_cast<int>(indices.size()), 3, cfg.crop, cfg.crop});
  const std::int64_t span = static_cast<std::int64_t>(3) * cfg.crop * cfg.crop;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor4 one = augment(ds.images[static_cast<std::size_t>(indices[i])],
                                cfg, rng);
    std::copy_n(one.data(), span, batch.data() + static_cast<std::int64_t>(i) * span);
  }
  return batch;
}

// -- Native NULD format ------------------------------------------------------

namespace {

void write_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

std::uint16_t read_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) {
    throw DataError(std::string("truncated file reading ") + what);
  }
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(std::string("truncated file reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_native(const Dataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write("NULD", 4);
  write_u32(os, 1);
  write_u32(os, static_cast<std::uint32_t>(ds.size()));
  write_u32(os, static_cast<std::uint32_t>(ds.class_names.size()));
  for (const std::string& name : ds.class_names) {
    write_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    write_u16(os, ds.labels[i]);
    os.write(reinterpret_cast<const char*>(ds.images[i].rgb.data()),
             static_cast<std::streamsize>(kImageBytes));
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

Dataset load_native(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "NULD") {
    throw DataError("bad magic in '" + path + "' (expected NULD)");
  }
  const std::uint32_t version = read_u32(is, "version");
  if (version != 1) {
    throw DataError("unsupported NULD version " + std::to_string(version));
  }
  const std::uint32_t samples = read_u32(is, "sample count");
  const std::uint32_t classes = read_u32(is, "class count");

  Dataset ds;
  ds.class_names.reserve(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    const std::uint16_t len = read_u16(is, "class name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("truncated class name table");
    ds.class_names.push_back(std::move(name));
  }
  ds.images.reserve(samples);
  ds.labels.reserve(samples);
  for (std::uint32_t i = 0; i < samples; ++i) {
    const std::uint16_t label = read_u16(is, "sample label");
    if (label >= classes) {
      throw DataError("label " + std::to_string(label) + " out of range in '" +
                      path + "'");
    }
    Image im{kImageSide, kImageSide, std::vector<std::uint8_t>(kImageBytes)};
    if (!is.read(reinterpret_cast<char*>(im.rgb.data()),
                 static_cast<std::streamsize>(kImageBytes))) {
      throw DataError("truncated sample " + std::to_string(i) + " in '" + path + "'");
    }
    ds.images.push_back(std::move(im));
    ds.labels.push_back(label);
  }
  return ds;
}

// -- PPM ---------------------------------------------------------------------

namespace {

int read_ppm_value(std::istream& is, const std::string& path) {
  // skips whitespace and '#' comments
  for (;;) {
    const int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  int v = -1;
  if (!(is >> v) || v < 0) throw DataError("malformed PPM header in '" + path + "'");
  return v;
}

}  // namespace

Image load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  char magic[2];
  if (!is.read(magic, 2) || magic[0] != 'P' || magic[1] != '6') {
    throw DataError("'" + path + "' is not a P6 PPM file");
  }
  Image im;
  im.width = read_ppm_value(is, path);
  im.height = read_ppm_value(is, path);
  const int maxval = read_ppm_value(is, path);
  if (im.width < 1 || im.height < 1 || maxval != 255) {
    throw DataError("unsupported PPM geometry/depth in '" + path + "'");
  }
  is.get();  // single whitespace after maxval
  im.rgb.resize(static_cast<std::size_t>(im.width) * im.height * 3);
  if (!is.read(reinterpret_cast<char*>(im.rgb.data()),
               static_cast<std::streamsize>(im.rgb.size()))) {
    throw DataError("truncated pixel data in '" + path + "'");
  }
  return im;
}

void save_ppm(const Image& image, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.rgb.data()),
           static_cast<std::streamsize>(image.rgb.size()));
  if (!os) throw DataError("write failed for '" + path + "'");
}

Image resize_to_dataset(const Image& image) {
  if (image.width < 1 || image.height < 1) {
    throw std::invalid_argument("resize_to_dataset: empty image");
  }
  if (image.width == kImageSide && image.height == kImageSide) return image;

  Image out{kImageSide, kImageSide, std::vector<std::uint8_t>(kImageBytes)};
  const float sx = static_cast<float>(image.width) / kImageSide;
  const float sy = static_cast<float>(image.height) / kImageSide;
  for (int y = 0; y < kImageSide; ++y) {
    const float fy = std::max(0.0f, (y + 0.5f) * sy - 0.5f);
    const int y0 = std::min(static_cast<int>(fy), image.height - 1);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int x = 0; x < kImageSide; ++x) {
      const float fx = std::max(0.0f, (x + 0.5f) * sx - 0.5f);
      const int x0 = std::min(static_cast<int>(fx), image.width - 1);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const float wx = fx - static_cast<float>(x0);
      for (int c = 0; c < 3; ++c) {
        auto px = [&](int yy, int xx) {
          return static_cast<float>(
              image.rgb[(static_cast<std::size_t>(yy) * image.width + xx) * 3 + c]);
        };
        const float top = px(y0, x0) * (1 - wx) + px(y0, x1) * wx;
        const float bot = px(y1, x0) * (1 - wx) + px(y1, x1) * wx;
        const float v = top * (1 - wy) + bot * wy;
        out.rgb[(static_cast<std::size_t>(y) * kImageSide + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
      }
    }
  }
  return out;
}

// -- Folder ingestion --------------------------------------------------------

Dataset ingest_folder(const std::string& root, bool skip_undecodable) {
  if (!fs::is_directory(root)) {
    throw DataError("'" + root + "' is not a directory");
  }
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw DataError("'" + root + "' contains no class subdirectories");
  }

  Dataset ds;
  for (std::size_t ci = 0; ci < class_dirs.size(); ++ci) {
    ds.class_names.push_back(class_dirs[ci].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[ci])) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t added = 0;
    for (const fs::path& file : files) {
      try {
        ds.images.push_back(resize_to_dataset(load_ppm(file.string())));
        ds.labels.push_back(static_cast<std::uint16_t>(ci));
        ++added;
      } catch (const DataError& e) {
        if (!skip_undecodable) {
          throw DataError("undecodable file '" + file.string() + "': " + e.what());
        }
      }
    }
    if (added == 0) {
      throw DataError("class directory '" + class_dirs[ci].string() +
                      "' holds no decodable images");
    }
  }
  return ds;
}

// -- Synthetic data ----------------------------------------------------------

namespace {

// h in [0,1) -> RGB, s=v fixed; enough to give classes distinct hues
void hue_to_rgb(float h, std::uint8_t rgb[3]) {
  const float v = 220.0f, s = 0.85f;
  const float c = v * s;
  const float hp = h * 6.0f;
  const float xval = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
  float r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = xval; break;
    case 1: r = xval; g = c; break;
    case 2: g = c; b = xval; break;
    case 3: g = xval; b = c; break;
    case 4: r = xval; b = c; break;
    default: r = c; b = xval; break;
  }
  const float m = v - c;
  rgb[0] = static_cast<std::uint8_t>(r + m);
  rgb[1] = static_cast<std::uint8_t>(g + m);
  rgb[2] = static_cast<std::uint8_t>(b + m);
}

}  // namespace

Dataset synth_dataset(int classes, int per_class, Rng& rng) {
  if (classes < 2) throw std::invalid_argument("synth_dataset: classes must be >= 2");
  if (per_class < 1) throw std::invalid_argument("synth_dataset: per_class must be >= 1");

  Dataset ds;
  char buf[32];
  for (int c = 0; c < classes; ++c) {
    std::snprintf(buf, sizeof(buf), "class_%03d", c);
    ds.class_names.emplace_back(buf);
  }

  for (int c = 0; c < classes; ++c) {
    std::uint8_t base[3];
    hue_to_rgb(static_cast<float>(c) / static_cast<float>(classes), base);
    const std::uint8_t fg[3] = {static_cast<std::uint8_t>(255 - base[0]),
                                static_cast<std::uint8_t>(255 - base[1]),
                                static_cast<std::uint8_t>(255 - base[2])};
    const int shape = c % 3;  // 0 circle, 1 square, 2 cross

    for (int s = 0; s < per_class; ++s) {
      Image im{kImageSide, kImageSide, std::vector<std::uint8_t>(kImageBytes)};
      for (std::size_t i = 0; i < kImageBytes; i += 3) {
        const int noise = static_cast<int>(rng.uniform_int(21)) - 10;
        for (int ch = 0; ch < 3; ++ch) {
          im.rgb[i + ch] = static_cast<std::uint8_t>(
              std::clamp(static_cast<int>(base[ch]) + noise, 0, 255));
        }
      }
      const int cx = 96 + static_cast<int>(rng.uniform_int(65));
      const int cy = 96 + static_cast<int>(rng.uniform_int(65));
      const int half = 30 + static_cast<int>(rng.uniform_int(25));
      for (int y = cy - half; y <= cy + half; ++y) {
        for (int x = cx - half; x <= cx + half; ++x) {
          if (y < 0 || y >= kImageSide || x < 0 || x >= kImageSide) continue;
          const int dx = x - cx, dy = y - cy;
          bool inside = false;
          if (shape == 0) {
            inside = dx * dx + dy * dy <= half * half;
          } else if (shape == 1) {
            inside = true;
          } else {
            inside = std::abs(dx) <= half / 3 || std::abs(dy) <= half / 3;
          }
          if (inside) {
            std::uint8_t* px =
                &im.rgb[(static_cast<std::size_t>(y) * kImageSide + x) * 3];
            px[0] = fg[0];
            px[1] = fg[1];
            px[2] = fg[2];
          }
        }
      }
      ds.images.push_back(std::move(im));
      ds.labels.push_back(static_cast<std::uint16_t>(c));
    }
  }
  return ds;
}

}  // namespace nulite
