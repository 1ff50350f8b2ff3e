#include "nulite/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nulite {

using MatRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatCM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

int conv2d_out_size(int h, int k, int stride, int pad) {
  if (k < 1 || stride < 1 || pad < 0) {
    throw std::invalid_argument("conv2d_out_size: bad kernel/stride/pad");
  }
  if (h + 2 * pad < k) {
    throw std::invalid_argument("conv2d_out_size: kernel larger than padded input");
  }
  return (h + 2 * pad - k) / stride + 1;
}

int pool_out_size(int h, int k, int stride) {
  if (k < 1 || stride < 1) {
    throw std::invalid_argument("pool_out_size: bad kernel/stride");
  }
  if (h < k) {
    throw std::invalid_argument("pool_out_size: kernel larger than input");
  }
  return static_cast<int>((h - k + stride - 1) / stride) + 1;
}

void ConvParams::validate() const {
  if (stride < 1 || pad < 0 || kernel < 1) {
    throw std::invalid_argument("ConvParams: stride/pad/kernel out of range");
  }
  Dims4 expect{out_channels, in_channels, kernel, kernel};
  if (weight.dims() != expect) {
    throw std::invalid_argument("ConvParams: weight dims " + weight.dims().str() +
                                " do not match " + expect.str());
  }
  if (!bias.empty() && static_cast<int>(bias.size()) != out_channels) {
    throw std::invalid_argument("ConvParams: bias length mismatch");
  }
}

BatchNormParams BatchNormParams::init(int channels) {
  BatchNormParams p;
  p.channels = channels;
  p.gamma.assign(channels, 1.0f);
  p.beta.assign(channels, 0.0f);
  p.running_mean.assign(channels, 0.0f);
  p.running_var.assign(channels, 1.0f);
  return p;
}

void BatchNormParams::validate() const {
  auto n = static_cast<std::size_t>(channels);
  if (gamma.size() != n || beta.size() != n || running_mean.size() != n ||
      running_var.size() != n) {
    throw std::invalid_argument("BatchNormParams: vector length mismatch");
  }
  if (!(epsilon > 0.0f) || !(momentum > 0.0f) || !(momentum < 1.0f)) {
    throw std::invalid_argument("BatchNormParams: bad epsilon/momentum");
  }
}

void LinearParams::validate() const {
  if (weight.size() !=
          static_cast<std::size_t>(in_features) * static_cast<std::size_t>(out_features) ||
      bias.size() != static_cast<std::size_t>(out_features)) {
    throw std::invalid_argument("LinearParams: dims inconsistent");
  }
}

// -- Convolution (im2col + GEMM, one sample at a time) -----------------------

namespace {

// cols is (in_ch*k*k) x (oh*ow), column-major.
void im2col(const float* x, int c_in, int h, int w, int k, int stride, int pad,
            int oh, int ow, float* cols) {
  const std::int64_t patch = static_cast<std::int64_t>(k) * k * c_in;
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::int64_t row = (static_cast<std::int64_t>(c) * k + ky) * k + kx;
        float* dst = cols + row;
        const float* plane = x + static_cast<std::int64_t>(c) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < ow; ++ox, dst += patch) {
            const int ix = ox * stride + kx - pad;
            *dst = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                       ? plane[static_cast<std::int64_t>(iy) * w + ix]
                       : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, int c_in, int h, int w, int k, int stride,
                int pad, int oh, int ow, float* x) {
  const std::int64_t patch = static_cast<std::int64_t>(k) * k * c_in;
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::int64_t row = (static_cast<std::int64_t>(c) * k + ky) * k + kx;
        const float* src = cols + row;
        float* plane = x + static_cast<std::int64_t>(c) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          for (int ox = 0; ox < ow; ++ox, src += patch) {
            const int ix = ox * stride + kx - pad;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
              plane[static_cast<std::int64_t>(iy) * w + ix] += *src;
            }
          }
        }
      }
    }
  }
}

void check_conv_input(const Tensor4& x, const ConvParams& p) {
  p.validate();
  if (x.dims().c != p.in_channels) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.dims().c) +
                                " channels, expected " +
                                std::to_string(p.in_channels));
  }
}

}  // namespace

Tensor4 conv2d_forward(const Tensor4& x, const ConvParams& p) {
  check_conv_input(x, p);
  const Dims4 d = x.dims();
  const int oh = conv2d_out_size(d.h, p.kernel, p.stride, p.pad);
  const int ow = conv2d_out_size(d.w, p.kernel, p.stride, p.pad);
  const std::int64_t patch =
      static_cast<std::int64_t>(p.in_channels) * p.kernel * p.kernel;
  const std::int64_t area = static_cast<std::int64_t>(oh) * ow;

  Tensor4 out = Tensor4::zeros({d.n, p.out_channels, oh, ow});
  CMapRM wmat(p.weight.data(), p.out_channels, patch);
  std::vector<float> cols(static_cast<std::size_t>(patch * area));

  for (int n = 0; n < d.n; ++n) {
    const float* xs = x.data() + static_cast<std::int64_t>(n) * d.c * d.h * d.w;
    im2col(xs, d.c, d.h, d.w, p.kernel, p.stride, p.pad, oh, ow, cols.data());
    Eigen::Map<const MatCM> cmat(cols.data(), patch, area);
    MapRM omat(out.data() + static_cast<std::int64_t>(n) * p.out_channels * area,
               p.out_channels, area);
    omat.noalias() = wmat * cmat;
    if (!p.bias.empty()) {
      for (int o = 0; o < p.out_channels; ++o) omat.row(o).array() += p.bias[o];
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p,
                          const Tensor4& grad_out) {
  check_conv_input(x, p);
  const Dims4 d = x.dims();
  const int oh = conv2d_out_size(d.h, p.kernel, p.stride, p.pad);
  const int ow = conv2d_out_size(d.w, p.kernel, p.stride, p.pad);
  if (grad_out.dims() != Dims4{d.n, p.out_channels, oh, ow}) {
    throw std::invalid_argument("conv2d_backward: grad_out dims " +
                                grad_out.dims().str() + " mismatch");
  }
  const std::int64_t patch =
      static_cast<std::int64_t>(p.in_channels) * p.kernel * p.kernel;
  const std::int64_t area = static_cast<std::int64_t>(oh) * ow;

  ConvGrads g;
  g.grad_x = Tensor4::zeros(d);
  g.grad_weight = Tensor4::zeros(p.weight.dims());
  if (!p.bias.empty()) g.grad_bias.assign(p.bias.size(), 0.0f);

  CMapRM wmat(p.weight.data(), p.out_channels, patch);
  MapRM gwmat(g.grad_weight.data(), p.out_channels, patch);
  std::vector<float> cols(static_cast<std::size_t>(patch * area));
  std::vector<float> gcols(cols.size());

  for (int n = 0; n < d.n; ++n) {
    const float* xs = x.data() + static_cast<std::int64_t>(n) * d.c * d.h * d.w;
    im2col(xs, d.c, d.h, d.w, p.kernel, p.stride, p.pad, oh, ow, cols.data());
    Eigen::Map<const MatCM> cmat(cols.data(), patch, area);
    CMapRM gmat(grad_out.data() +
                    static_cast<std::int64_t>(n) * p.out_channels * area,
                p.out_channels, area);
    gwmat.noalias() += gmat * cmat.transpose();
    Eigen::Map<MatCM> gcmat(gcols.data(), patch, area);
    gcmat.noalias() = wmat.transpose() * gmat;
    col2im_add(gcols.data(), d.c, d.h, d.w, p.kernel, p.stride, p.pad, oh, ow,
               g.grad_x.data() + static_cast<std::int64_t>(n) * d.c * d.h * d.w);
    if (!p.bias.empty()) {
      for (int o = 0; o < p.out_channels; ++o) g.grad_bias[o] += gmat.row(o).sum();
    }
  }
  return g;
}

// -- Pooling -----------------------------------------------------------------

PoolResult maxpool_forward(const Tensor4& x, int k, int stride) {
  const Dims4 d = x.dims();
  const int oh = pool_out_size(d.h, k, stride);
  const int ow = pool_out_size(d.w, k, stride);

  PoolResult r;
  r.out = Tensor4::zeros({d.n, d.c, oh, ow});
  r.argmax.resize(static_cast<std::size_t>(r.out.size()));

  const float* xp = x.data();
  float* op = r.out.data();
  std::int64_t oi = 0;
  for (int n = 0; n < d.n; ++n) {
    for (int c = 0; c < d.c; ++c) {
      const std::int64_t base =
          (static_cast<std::int64_t>(n) * d.c + c) * d.h * d.w;
      for (int oy = 0; oy < oh; ++oy) {
        const int y0 = oy * stride;
        const int y1 = std::min(y0 + k, d.h);
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          const int x0 = ox * stride;
          const int x1 = std::min(x0 + k, d.w);
          float best = -std::numeric_limits<float>::infinity();
          std::int64_t best_at = -1;
          for (int y = y0; y < y1; ++y) {
            for (int xx = x0; xx < x1; ++xx) {
              const std::int64_t off = base + static_cast<std::int64_t>(y) * d.w + xx;
              if (xp[off] > best) {
                best = xp[off];
                best_at = off;
              }
            }
          }
          op[oi] = best;
          r.argmax[static_cast<std::size_t>(oi)] = best_at;
        }
      }
    }
  }
  return r;
}

Tensor4 maxpool_backward(const std::vector<std::int64_t>& argmax,
                         const Tensor4& grad_out, Dims4 in_dims) {
  if (static_cast<std::int64_t>(argmax.size()) != grad_out.size()) {
    throw std::invalid_argument("maxpool_backward: argmax/grad_out size mismatch");
  }
  Tensor4 gx = Tensor4::zeros(in_dims);
  const std::int64_t limit = gx.size();
  const float* gp = grad_out.data();
  float* xp = gx.data();
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    const std::int64_t off = argmax[i];
    if (off < 0 || off >= limit) {
      throw std::out_of_range("maxpool_backward: argmax index out of range");
    }
    xp[off] += gp[i];
  }
  return gx;
}

Tensor4 global_avgpool_forward(const Tensor4& x) {
  const Dims4 d = x.dims();
  Tensor4 out = Tensor4::zeros({d.n, d.c, 1, 1});
  const std::int64_t area = static_cast<std::int64_t>(d.h) * d.w;
  const float* xp = x.data();
  for (std::int64_t plane = 0; plane < static_cast<std::int64_t>(d.n) * d.c; ++plane) {
    double sum = 0.0;
    for (std::int64_t i = 0; i < area; ++i) sum += xp[plane * area + i];
    out.data()[plane] = static_cast<float>(sum / static_cast<double>(area));
  }
  return out;
}

Tensor4 global_avgpool_backward(const Tensor4& grad_out, Dims4 in_dims) {
  if (grad_out.dims() != Dims4{in_dims.n, in_dims.c, 1, 1}) {
    throw std::invalid_argument("global_avgpool_backward: dims mismatch");
  }
  Tensor4 gx = Tensor4::zeros(in_dims);
  const std::int64_t area = static_cast<std::int64_t>(in_dims.h) * in_dims.w;
  const float scale = 1.0f / static_cast<float>(area);
  for (std::int64_t plane = 0;
       plane < static_cast<std::int64_t>(in_dims.n) * in_dims.c; ++plane) {
    const float g = grad_out.data()[plane] * scale;
    float* dst = gx.data() + plane * area;
    for (std::int64_t i = 0; i < area; ++i) dst[i] = g;
  }
  return gx;
}

// -- Batch normalization -----------------------------------------------------

namespace {

void check_bn_input(const Tensor4& x, const BatchNormParams& p) {
  p.validate();
  if (x.dims().c != p.channels) {
    throw std::invalid_argument("batchnorm: channel mismatch (" +
                                std::to_string(x.dims().c) + " vs " +
                                std::to_string(p.channels) + ")");
  }
}

// Per-channel mean and biased variance over (N,H,W), accumulated in double
// in a fixed order so results are deterministic.
void batch_stats(const Tensor4& x, std::vector<double>& mean,
                 std::vector<double>& var) {
  const Dims4 d = x.dims();
  const std::int64_t area = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t m = static_cast<std::int64_t>(d.n) * area;
  mean.assign(d.c, 0.0);
  var.assign(d.c, 0.0);
  for (int c = 0; c < d.c; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int n = 0; n < d.n; ++n) {
      const float* plane =
          x.data() + (static_cast<std::int64_t>(n) * d.c + c) * area;
      for (std::int64_t i = 0; i < area; ++i) {
        sum += plane[i];
        sumsq += static_cast<double>(plane[i]) * plane[i];
      }
    }
    mean[c] = sum / static_cast<double>(m);
    var[c] = std::max(0.0, sumsq / static_cast<double>(m) - mean[c] * mean[c]);
  }
}

}  // namespace

Tensor4 batchnorm_forward(const Tensor4& x, BatchNormParams& p, BnMode mode) {
  check_bn_input(x, p);
  const Dims4 d = x.dims();
  const std::int64_t area = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t m = static_cast<std::int64_t>(d.n) * area;

  std::vector<double> mean(d.c), var(d.c);
  if (mode == BnMode::train) {
    if (m < 2) {
      throw std::invalid_argument("batchnorm_forward: train mode needs N*H*W >= 2");
    }
    batch_stats(x, mean, var);
    const double unbias = static_cast<double>(m) / static_cast<double>(m - 1);
    for (int c = 0; c < d.c; ++c) {
      p.running_mean[c] = static_cast<float>((1.0 - p.momentum) * p.running_mean[c] +
                                             p.momentum * mean[c]);
      p.running_var[c] = static_cast<float>((1.0 - p.momentum) * p.running_var[c] +
                                            p.momentum * var[c] * unbias);
    }
  } else {
    for (int c = 0; c < d.c; ++c) {
      mean[c] = p.running_mean[c];
      var[c] = p.running_var[c];
    }
  }

  Tensor4 out = Tensor4::zeros(d);
  for (int c = 0; c < d.c; ++c) {
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var[c] + p.epsilon));
    const float mu = static_cast<float>(mean[c]);
    const float g = p.gamma[c], b = p.beta[c];
    for (int n = 0; n < d.n; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * d.c + c) * area;
      const float* src = x.data() + off;
      float* dst = out.data() + off;
      for (std::int64_t i = 0; i < area; ++i) {
        dst[i] = g * (src[i] - mu) * inv_std + b;
      }
    }
  }
  return out;
}

BnGrads batchnorm_backward(const Tensor4& x, const BatchNormParams& p,
                           const Tensor4& grad_out) {
  check_bn_input(x, p);
  if (grad_out.dims() != x.dims()) {
    throw std::invalid_argument("batchnorm_backward: grad_out dims mismatch");
  }
  const Dims4 d = x.dims();
  const std::int64_t area = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t m = static_cast<std::int64_t>(d.n) * area;

  std::vector<double> mean, var;
  batch_stats(x, mean, var);

  BnGrads g;
  g.grad_x = Tensor4::zeros(d);
  g.grad_gamma.assign(d.c, 0.0f);
  g.grad_beta.assign(d.c, 0.0f);

  for (int c = 0; c < d.c; ++c) {
    const double inv_std = 1.0 / std::sqrt(var[c] + p.epsilon);
    double sum_g = 0.0, sum_gx = 0.0;  // sum(go), sum(go * xhat)
    for (int n = 0; n < d.n; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * d.c + c) * area;
      const float* xs = x.data() + off;
      const float* gs = grad_out.data() + off;
      for (std::int64_t i = 0; i < area; ++i) {
        sum_g += gs[i];
        sum_gx += gs[i] * (xs[i] - mean[c]) * inv_std;
      }
    }
    g.grad_beta[c] = static_cast<float>(sum_g);
    g.grad_gamma[c] = static_cast<float>(sum_gx);

    const double scale = p.gamma[c] * inv_std / static_cast<double>(m);
    for (int n = 0; n < d.n; ++n) {
      const std::int64_t off = (static_cast<std::int64_t>(n) * d.c + c) * area;
      const float* xs = x.data() + off;
      const float* gs = grad_out.data() + off;
      float* dst = g.grad_x.data() + off;
      for (std::int64_t i = 0; i < area; ++i) {
        const double xhat = (xs[i] - mean[c]) * inv_std;
        dst[i] = static_cast<float>(
            scale * (static_cast<double>(m) * gs[i] - sum_g - xhat * sum_gx));
      }
    }
  }
  return g;
}

// -- Activations / concat / linear -------------------------------------------

Tensor4 relu_forward(const Tensor4& x) {
  Tensor4 out = x;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    if (out.data()[i] < 0.0f) out.data()[i] = 0.0f;
  }
  return out;
}

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
  if (grad_out.dims() != x.dims()) {
    throw std::invalid_argument("relu_backward: dims mismatch");
  }
  Tensor4 gx = grad_out;
  for (std::int64_t i = 0; i < gx.size(); ++i) {
    if (x.data()[i] <= 0.0f) gx.data()[i] = 0.0f;
  }
  return gx;
}

Tensor4 concat_channels(const std::vector<const Tensor4*>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_channels: empty part list");
  }
  const Dims4 first = parts[0]->dims();
  int channels = 0;
  for (const Tensor4* t : parts) {
    const Dims4 d = t->dims();
    if (d.n != first.n || d.h != first.h || d.w != first.w) {
      throw std::invalid_argument("concat_channels: N/H/W mismatch between parts");
    }
    channels += d.c;
  }
  Tensor4 out = Tensor4::zeros({first.n, channels, first.h, first.w});
  const std::int64_t area = static_cast<std::int64_t>(first.h) * first.w;
  for (int n = 0; n < first.n; ++n) {
    std::int64_t c_off = 0;
    for (const Tensor4* t : parts) {
      const std::int64_t span = static_cast<std::int64_t>(t->dims().c) * area;
      std::copy_n(t->data() + static_cast<std::int64_t>(n) * span, span,
                  out.data() + (static_cast<std::int64_t>(n) * channels) * area +
                      c_off * area);
      c_off += t->dims().c;
    }
  }
  return out;
}

std::vector<Tensor4> split_channels(const Tensor4& x,
                                    const std::vector<int>& channel_counts) {
  int total = 0;
  for (int c : channel_counts) total += c;
  if (total != x.dims().c) {
    throw std::invalid_argument("split_channels: counts do not sum to channels");
  }
  const Dims4 d = x.dims();
  const std::int64_t area = static_cast<std::int64_t>(d.h) * d.w;
  std::vector<Tensor4> parts;
  parts.reserve(channel_counts.size());
  int c_off = 0;
  for (int c : channel_counts) {
    Tensor4 part = Tensor4::zeros({d.n, c, d.h, d.w});
    const std::int64_t span = static_cast<std::int64_t>(c) * area;
    for (int n = 0; n < d.n; ++n) {
      std::copy_n(x.data() + (static_cast<std::int64_t>(n) * d.c + c_off) * area,
                  span, part.data() + static_cast<std::int64_t>(n) * span);
    }
    parts.push_back(std::move(part));
    c_off += c;
  }
  return parts;
}

namespace {
void check_linear_input(const Tensor4& x, const LinearParams& p) {
  p.validate();
  if (x.dims().c != p.in_features || x.dims().h != 1 || x.dims().w != 1) {
    throw std::invalid_argument("linear: input " + x.dims().str() +
                                " does not match in_features " +
                                std::to_string(p.in_features));
  }
}
}  // namespace

Tensor4 linear_forward(const Tensor4& x, const LinearParams& p) {
  check_linear_input(x, p);
  const int n = x.dims().n;
  Tensor4 out = Tensor4::zeros({n, p.out_features, 1, 1});
  CMapRM xm(x.data(), n, p.in_features);
  CMapRM wm(p.weight.data(), p.out_features, p.in_features);
  MapRM ym(out.data(), n, p.out_features);
  ym.noalias() = xm * wm.transpose();
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < p.out_features; ++o) ym(i, o) += p.bias[o];
  }
  return out;
}

LinearGrads linear_backward(const Tensor4& x, const LinearParams& p,
                            const Tensor4& grad_out) {
  check_linear_input(x, p);
  if (grad_out.dims() != Dims4{x.dims().n, p.out_features, 1, 1}) {
    throw std::invalid_argument("linear_backward: grad_out dims mismatch");
  }
  const int n = x.dims().n;
  LinearGrads g;
  g.grad_x = Tensor4::zeros(x.dims());
  g.grad_weight.assign(p.weight.size(), 0.0f);
  g.grad_bias.assign(p.bias.size(), 0.0f);

  CMapRM xm(x.data(), n, p.in_features);
  CMapRM wm(p.weight.data(), p.out_features, p.in_features);
  CMapRM gm(grad_out.data(), n, p.out_features);
  MapRM gxm(g.grad_x.data(), n, p.in_features);
  MapRM gwm(g.grad_weight.data(), p.out_features, p.in_features);

  gxm.noalias() = gm * wm;
  gwm.noalias() = gm.transpose() * xm;
  for (int o = 0; o < p.out_features; ++o) g.grad_bias[o] = gm.col(o).sum();
  return g;
}

// -- Loss --------------------------------------------------------------------

Tensor4 softmax(const Tensor4& logits) {
  const Dims4 d = logits.dims();
  if (d.h != 1 || d.w != 1) {
    throw std::invalid_argument("softmax: expected (N,C,1,1) logits");
  }
  Tensor4 probs = Tensor4::zeros(d);
  for (int n = 0; n < d.n; ++n) {
    const float* row = logits.data() + static_cast<std::int64_t>(n) * d.c;
    float* out = probs.data() + static_cast<std::int64_t>(n) * d.c;
    float mx = row[0];
    for (int c = 1; c < d.c; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < d.c; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
    for (int c = 0; c < d.c; ++c) {
      out[c] = static_cast<float>(std::exp(static_cast<double>(row[c] - mx)) / denom);
    }
  }
  return probs;
}

SoftmaxLoss softmax_cross_entropy(const Tensor4& logits,
                                  const std::vector<int>& labels) {
  const Dims4 d = logits.dims();
  if (static_cast<int>(labels.size()) != d.n) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  for (int y : labels) {
    if (y < 0 || y >= d.c) {
      throw std::out_of_range("softmax_cross_entropy: label out of range");
    }
  }
  SoftmaxLoss r;
  r.probs = softmax(logits);
  r.grad_logits = r.probs;
  double total = 0.0;
  for (int n = 0; n < d.n; ++n) {
    float* grad = r.grad_logits.data() + static_cast<std::int64_t>(n) * d.c;
    const float p = r.probs.at(n, labels[n], 0, 0);
    total -= std::log(std::max(static_cast<double>(p), 1e-30));
    grad[labels[n]] -= 1.0f;
    for (int c = 0; c < d.c; ++c) grad[c] /= static_cast<float>(d.n);
  }
  r.loss = total / static_cast<double>(d.n);
  return r;
}

}  // namespace nulite
