#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nulite/model.hpp"

namespace nulite {

struct TensorEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

/// Named-tensor snapshot of a model: all learnable parameters plus batch-norm
/// running statistics, in graph order.
struct Checkpoint {
  std::string arch_id;
  std::uint32_t num_classes = 0;
  std::vector<TensorEntry> tensors;
};

Checkpoint snapshot(Model& model);

// "NULT" file, little-endian:
//   magic "NULT" | version u32=1 | arch_id (u16 len + UTF-8) |
//   num_classes u32 | tensor_count u32 |
//   per tensor: name (u16 len + UTF-8) | ndim u8 | dims u32*ndim |
//               raw 32-bit float data
// The file is written atomically (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the architecture named by the checkpoint and loads every tensor,
/// validating the inventory (missing, extra, or mis-shaped tensors are
/// reported by name).
Model restore_model(const Checkpoint& ckpt);

/// Header metadata as a JSON object (the CLI's --json-meta output).
std::string checkpoint_meta_json(const Checkpoint& ckpt);

}  // namespace nulite
