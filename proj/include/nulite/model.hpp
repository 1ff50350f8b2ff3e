#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nulite/graph.hpp"
#include "nulite/layers.hpp"
#include "nulite/tensor.hpp"

namespace nulite {

/// A mutable view of one stored tensor (flat 32-bit data plus its logical
/// dims). `decay` marks tensors that receive weight decay (conv/linear
/// weights only).
struct ParamRef {
  std::string name;
  float* data = nullptr;
  std::int64_t size = 0;
  std::vector<std::uint32_t> dims;
  bool decay = false;
};

/// Gradient buffers aligned one-to-one with Model::learnable_params().
using GradBuffers = std::vector<std::vector<float>>;

/// Executable network: a NetGraph plus allocated parameters. Owns forward and
/// backward passes over the DAG.
class Model {
 public:
  /// Allocates and initializes parameters: conv/linear weights ~
  /// normal(0, sqrt(2/fan_in)), biases 0, BN gamma=1/beta=0, running stats
  /// identity.
  Model(NetGraph graph, std::uint64_t seed);

  const NetGraph& graph() const { return graph_; }

  /// Learnable tensors in graph order (the optimizer's view).
  std::vector<ParamRef> learnable_params();

  /// Learnable tensors plus BN running statistics (the checkpoint inventory).
  std::vector<ParamRef> state_tensors();

  GradBuffers make_grad_buffers();

  /// Forward to the pre-softmax logits (N, num_classes, 1, 1).
  Tensor4 logits(const Tensor4& x, BnMode mode);

  /// Eval-mode class probabilities.
  Tensor4 predict(const Tensor4& x);

  /// Per-layer activations recorded by a training forward pass.
  struct Tape {
    std::vector<Tensor4> outputs;                   // aligned with graph layers
    std::vector<std::vector<std::int64_t>> argmax;  // maxpool layers only
    int logits_layer = -1;
  };

  /// Train-mode forward (updates BN running stats); fills `tape` for backward.
  Tensor4 forward_train(const Tensor4& x, Tape& tape);

  /// Backpropagates `grad_logits` through the tape; writes parameter
  /// gradients into `grads` (overwriting). Fan-out gradients are summed in
  /// fixed reverse-graph order, keeping results deterministic.
  void backward(const Tape& tape, const Tensor4& grad_logits, GradBuffers& grads);

 private:
  Tensor4 run_forward(const Tensor4& x, BnMode mode, Tape* tape);

  NetGraph graph_;
  // one slot per layer; only the member matching the layer kind is populated
  struct Slot {
    ConvParams conv;
    BatchNormParams bn;
    LinearParams lin;
  };
  std::vector<Slot> slots_;
};

}  // namespace nulite
