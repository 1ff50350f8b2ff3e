#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nulite/tensor.hpp"

namespace nulite {

enum class LayerKind {
  input,
  conv,
  maxpool,
  global_avgpool,
  batchnorm,
  relu,
  concat,
  linear,
  softmax,
};

const char* kind_name(LayerKind k);

/// One node of the declarative network DAG. Only the fields relevant to
/// `kind` are meaningful.
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::input;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  int out_channels = 0;   // conv
  int out_features = 0;   // linear
  bool has_bias = false;  // conv only; linear always carries a bias
  std::vector<std::string> inputs;
};

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;
  bool operator==(const Shape& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
};

/// Topologically ordered layer list plus the input contract. Immutable once
/// built; single source of truth for shapes, parameters and execution.
struct NetGraph {
  std::string arch_id;
  std::vector<LayerSpec> layers;
  Shape input{3, 224, 224};
  int num_classes = 0;

  int layer_index(const std::string& id) const;  // -1 when absent
};

/// Checks id uniqueness, reference validity, acyclicity (inputs must precede
/// their consumers), fan-in arities, and the single input / single softmax
/// sink contract. Throws std::invalid_argument naming the offending layer.
void validate_graph(const NetGraph& g);

/// Per-layer output shapes, aligned with g.layers. Throws on any
/// inconsistency, naming the layer.
std::vector<Shape> propagate_shapes(const NetGraph& g);

enum class BlockVariant { A, B };

/// The Squeeze + 4-branch Expand block. Variant A squeezes the input depth N
/// to N/4, variant B keeps N; both expand through parallel 1x1/3x3/5x5/7x7
/// convolutions of N/2 filters each, concatenated to 2N output channels.
struct NuLiteBlockSpec {
  BlockVariant variant = BlockVariant::A;
  int in_depth = 0;

  int squeeze_width() const;
  int branch_width() const { return in_depth / 2; }
  int out_channels() const { return 2 * in_depth; }
  void validate() const;
};

/// Appends the block's layers to `g`, reading from `input_id`; returns the id
/// of the concat output node. Layer ids are prefixed with `name`.
std::string append_nu_lite_block(NetGraph& g, const std::string& name,
                                 const NuLiteBlockSpec& spec,
                                 const std::string& input_id);

NetGraph build_nu_litenet(BlockVariant variant, int num_classes);
NetGraph build_squeezenet(int num_classes);

/// Builds from a stored arch id ("nu-lite-a" | "nu-lite-b" | "squeezenet").
NetGraph build_arch(const std::string& arch_id, int num_classes);

struct CostRow {
  std::string id;
  LayerKind kind = LayerKind::input;
  Shape out;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
};

CostReport count_params(const NetGraph& g);
CostReport count_macs(const NetGraph& g);
CostReport count_macs(const NetGraph& g, Shape input);

/// Human-readable per-layer table with a totals footer; the format is stable
/// and golden-tested.
std::string describe(const NetGraph& g);

}  // namespace nulite
