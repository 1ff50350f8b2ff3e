#include "nulite/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nulite/data.hpp"  // DataError

namespace nulite {

Checkpoint snapshot(Model& model) {
  Checkpoint ckpt;
  ckpt.arch_id = model.graph().arch_id;
  ckpt.num_classes = static_cast<std::uint32_t>(model.graph().num_classes);
  for (const ParamRef& p : model.state_tensors()) {
    TensorEntry e;
    e.name = p.name;
    e.dims = p.dims;
    e.data.assign(p.data, p.data + p.size);
    ckpt.tensors.push_back(std::move(e));
  }
  return ckpt;
}

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

void write_f32(std::ostream& os, const float* data, std::size_t count) {
  static_assert(sizeof(float) == 4);
  // x86/ARM little-endian float layout; stated as the format's byte order
  os.write(reinterpret_cast<const char*>(data),
           static_cast<std::streamsize>(count * 4));
}

std::uint16_t read_u16(std::istream& is, const char* what) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) {
    throw DataError(std::string("truncated checkpoint reading ") + what);
  }
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(std::string("truncated checkpoint reading ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string read_str(std::istream& is, const char* what) {
  const std::uint16_t len = read_u16(is, what);
  std::string s(len, '\0');
  if (!is.read(s.data(), len)) {
    throw DataError(std::string("truncated checkpoint reading ") + what);
  }
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open '" + tmp + "' for writing");
    os.write("NULT", 4);
    write_u32(os, 1);
    write_u16(os, static_cast<std::uint16_t>(ckpt.arch_id.size()));
    os.write(ckpt.arch_id.data(),
             static_cast<std::streamsize>(ckpt.arch_id.size()));
    write_u32(os, ckpt.num_classes);
    write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const TensorEntry& t : ckpt.tensors) {
      write_u16(os, static_cast<std::uint16_t>(t.name.size()));
      os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      os.put(static_cast<char>(t.dims.size()));
      std::uint64_t count = 1;
      for (std::uint32_t d : t.dims) {
        write_u32(os, d);
        count *= d;
      }
      if (count != t.data.size()) {
        throw DataError("checkpoint tensor '" + t.name + "' dims/data mismatch");
      }
      for (float v : t.data) {
        if (!std::isfinite(v)) {
          throw DataError("checkpoint tensor '" + t.name + "' holds non-finite values");
        }
      }
      write_f32(os, t.data.data(), t.data.size());
    }
    if (!os) throw DataError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "NULT") {
    throw DataError("bad magic in '" + path + "' (expected NULT)");
  }
  const std::uint32_t version = read_u32(is, "version");
  if (version != 1) {
    throw DataError("unsupported NULT version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.arch_id = read_str(is, "arch id");
  ckpt.num_classes = read_u32(is, "class count");
  const std::uint32_t tensor_count = read_u32(is, "tensor count");
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    TensorEntry t;
    t.name = read_str(is, "tensor name");
    const int ndim = is.get();
    if (ndim < 1 || ndim > 8) {
      throw DataError("bad tensor rank in '" + path + "' for '" + t.name + "'");
    }
    std::uint64_t count = 1;
    for (int d = 0; d < ndim; ++d) {
      t.dims.push_back(read_u32(is, "tensor dims"));
      count *= t.dims.back();
    }
    t.data.resize(count);
    if (!is.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(count * 4))) {
      throw DataError("truncated tensor data for '" + t.name + "' in '" + path + "'");
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

Model restore_model(const Checkpoint& ckpt) {
  Model model(build_arch(ckpt.arch_id, static_cast<int>(ckpt.num_classes)), 0);
  std::vector<ParamRef> inventory = model.state_tensors();
  if (inventory.size() != ckpt.tensors.size()) {
    throw DataError("checkpoint inventory mismatch: file has " +
                    std::to_string(ckpt.tensors.size()) + " tensors, " +
                    ckpt.arch_id + " expects " + std::to_string(inventory.size()));
  }
  for (const TensorEntry& t : ckpt.tensors) {
    auto it = std::find_if(inventory.begin(), inventory.end(),
                           [&](const ParamRef& p) { return p.name == t.name; });
    if (it == inventory.end()) {
      throw DataError("checkpoint holds unexpected tensor '" + t.name + "'");
    }
    if (it->dims != t.dims) {
      throw DataError("checkpoint tensor '" + t.name + "' has mismatched dims");
    }
    std::copy(t.data.begin(), t.data.end(), it->data);
    inventory.erase(it);
  }
  if (!inventory.empty()) {
    throw DataError("checkpoint missing tensor '" + inventory.front().name + "'");
  }
  return model;
}

std::string checkpoint_meta_json(const Checkpoint& ckpt) {
  nlohmann::json meta;
  meta["format"] = "NULT";
  meta["version"] = 1;
  meta["arch"] = ckpt.arch_id;
  meta["num_classes"] = ckpt.num_classes;
  meta["tensor_count"] = ckpt.tensors.size();
  std::uint64_t elements = 0;
  for (const TensorEntry& t : ckpt.tensors) elements += t.data.size();
  meta["total_elements"] = elements;
  meta["payload_bytes"] = elements * 4;
  return meta.dump(2);
}

}  // namespace nulite
