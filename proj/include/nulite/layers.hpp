#pragma once

#include <cstdint>
#include <vector>

#include "nulite/tensor.hpp"

namespace nulite {

// -- Shape arithmetic --------------------------------------------------------

/// Convolution output extent: floor((h + 2*pad - k) / stride) + 1.
int conv2d_out_size(int h, int k, int stride, int pad);

/// Pooling output extent with CEILING division: ceil((h - k) / stride) + 1.
/// Edge windows are truncated to the valid region.
int pool_out_size(int h, int k, int stride);

// -- Parameter records -------------------------------------------------------

struct ConvParams {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  Tensor4 weight;            // (out_channels, in_channels, k, k)
  std::vector<float> bias;   // empty == absent

  void validate() const;
};

struct BatchNormParams {
  int channels = 0;
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.1f;
  float epsilon = 1e-5f;

  static BatchNormParams init(int channels);
  void validate() const;
};

struct LinearParams {
  int in_features = 0;
  int out_features = 0;
  std::vector<float> weight;  // (out, in) row-major
  std::vector<float> bias;    // (out)

  void validate() const;
};

enum class BnMode { train, eval };

// -- Convolution -------------------------------------------------------------

Tensor4 conv2d_forward(const Tensor4& x, const ConvParams& p);

struct ConvGrads {
  Tensor4 grad_x;
  Tensor4 grad_weight;
  std::vector<float> grad_bias;  // empty when bias absent
};
ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p,
                          const Tensor4& grad_out);

// -- Pooling -----------------------------------------------------------------

struct PoolResult {
  Tensor4 out;
  std::vector<std::int64_t> argmax;  // flat input offset per output element
};
PoolResult maxpool_forward(const Tensor4& x, int k, int stride);
Tensor4 maxpool_backward(const std::vector<std::int64_t>& argmax,
                         const Tensor4& grad_out, Dims4 in_dims);

Tensor4 global_avgpool_forward(const Tensor4& x);
Tensor4 global_avgpool_backward(const Tensor4& grad_out, Dims4 in_dims);

// -- Batch normalization -----------------------------------------------------

/// Train mode normalizes by batch statistics over (N,H,W) and updates the
/// running stats in `p` (running variance tracks the unbiased estimate).
/// Eval mode normalizes by the running stats.
Tensor4 batchnorm_forward(const Tensor4& x, BatchNormParams& p, BnMode mode);

struct BnGrads {
  Tensor4 grad_x;
  std::vector<float> grad_gamma;
  std::vector<float> grad_beta;
};
/// Gradients through train-mode normalization; batch statistics are
/// recomputed from `x`.
BnGrads batchnorm_backward(const Tensor4& x, const BatchNormParams& p,
                           const Tensor4& grad_out);

// -- Activations / concat / linear -------------------------------------------

Tensor4 relu_forward(const Tensor4& x);
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);

Tensor4 concat_channels(const std::vector<const Tensor4*>& parts);
std::vector<Tensor4> split_channels(const Tensor4& x,
                                    const std::vector<int>& channel_counts);

/// x is (N, in_features, 1, 1); result is (N, out_features, 1, 1).
Tensor4 linear_forward(const Tensor4& x, const LinearParams& p);

struct LinearGrads {
  Tensor4 grad_x;
  std::vector<float> grad_weight;
  std::vector<float> grad_bias;
};
LinearGrads linear_backward(const Tensor4& x, const LinearParams& p,
                            const Tensor4& grad_out);

// -- Loss --------------------------------------------------------------------

struct SoftmaxLoss {
  double loss = 0.0;    // mean negative log-likelihood
  Tensor4 grad_logits;  // (probs - onehot) / N
  Tensor4 probs;
};
SoftmaxLoss softmax_cross_entropy(const Tensor4& logits,
                                  const std::vector<int>& labels);

/// Row-wise stabilized softmax of (N,C,1,1) logits.
Tensor4 softmax(const Tensor4& logits);

}  // namespace nulite
