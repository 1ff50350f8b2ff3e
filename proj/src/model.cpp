#include "nulite/model.hpp"

#include <cmath>
#include <stdexcept>

namespace nulite {

Model::Model(NetGraph graph, std::uint64_t seed) : graph_(std::move(graph)) {
  const std::vector<Shape> shapes = propagate_shapes(graph_);
  slots_.resize(graph_.layers.size());
  Rng rng(seed);

  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const LayerSpec& l = graph_.layers[i];
    const Shape in_shape =
        l.inputs.empty() ? graph_.input
                         : shapes[static_cast<std::size_t>(
                               graph_.layer_index(l.inputs[0]))];
    switch (l.kind) {
      case LayerKind::conv: {
        ConvParams& p = slots_[i].conv;
        p.in_channels = in_shape.c;
        p.out_channels = l.out_channels;
        p.kernel = l.kernel;
        p.stride = l.stride;
        p.pad = l.pad;
        const float std_dev = std::sqrt(
            2.0f / static_cast<float>(in_shape.c * l.kernel * l.kernel));
        p.weight = Tensor4::randn(
            {l.out_channels, in_shape.c, l.kernel, l.kernel}, std_dev, rng);
        if (l.has_bias) p.bias.assign(l.out_channels, 0.0f);
        break;
      }
      case LayerKind::batchnorm:
        slots_[i].bn = BatchNormParams::init(in_shape.c);
        break;
      case LayerKind::linear: {
        LinearParams& p = slots_[i].lin;
        p.in_features = in_shape.c;
        p.out_features = l.out_features;
        p.weight.resize(static_cast<std::size_t>(p.in_features) * p.out_features);
        const float std_dev = std::sqrt(2.0f / static_cast<float>(p.in_features));
        for (float& v : p.weight) v = static_cast<float>(rng.normal(std_dev));
        p.bias.assign(p.out_features, 0.0f);
        break;
      }
      default:
        break;
    }
  }
}

namespace {

void push_vec(std::vector<ParamRef>& out, const std::string& name,
              std::vector<float>& v, bool decay = false) {
  out.push_back({name, v.data(), static_cast<std::int64_t>(v.size()),
                 {static_cast<std::uint32_t>(v.size())}, decay});
}

void push_tensor(std::vector<ParamRef>& out, const std::string& name, Tensor4& t,
                 bool decay) {
  const Dims4 d = t.dims();
  out.push_back({name, t.data(), t.size(),
                 {static_cast<std::uint32_t>(d.n), static_cast<std::uint32_t>(d.c),
                  static_cast<std::uint32_t>(d.h), static_cast<std::uint32_t>(d.w)},
                 decay});
}

}  // namespace

std::vector<ParamRef> Model::learnable_params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const LayerSpec& l = graph_.layers[i];
    if (l.kind == LayerKind::conv) {
      push_tensor(out, l.id + ".weight", slots_[i].conv.weight, true);
      if (!slots_[i].conv.bias.empty()) {
        push_vec(out, l.id + ".bias", slots_[i].conv.bias);
      }
    } else if (l.kind == LayerKind::batchnorm) {
      push_vec(out, l.id + ".gamma", slots_[i].bn.gamma);
      push_vec(out, l.id + ".beta", slots_[i].bn.beta);
    } else if (l.kind == LayerKind::linear) {
      LinearParams& p = slots_[i].lin;
      out.push_back({l.id + ".weight", p.weight.data(),
                     static_cast<std::int64_t>(p.weight.size()),
                     {static_cast<std::uint32_t>(p.out_features),
                      static_cast<std::uint32_t>(p.in_features)},
                     true});
      push_vec(out, l.id + ".bias", p.bias);
    }
  }
  return out;
}

std::vector<ParamRef> Model::state_tensors() {
  std::vector<ParamRef> out = learnable_params();
  for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
    const LayerSpec& l = graph_.layers[i];
    if (l.kind == LayerKind::batchnorm) {
      push_vec(out, l.id + ".running_mean", slots_[i].bn.running_mean);
      push_vec(out, l.id + ".running_var", slots_[i].bn.running_var);
    }
  }
  return out;
}

GradBuffers Model::make_grad_buffers() {
  GradBuffers grads;
  for (const ParamRef& p : learnable_params()) {
    grads.emplace_back(static_cast<std::size_t>(p.size), 0.0f);
  }
  return grads;
}

Tensor4 Model::logits(const Tensor4& x, BnMode mode) {
  return run_forward(x, mode, nullptr);
}

Tensor4 Model::predict(const Tensor4& x) {
  return softmax(run_forward(x, BnMode::eval, nullptr));
}

Tensor4 Model::forward_train(const Tensor4& x, Tape& tape) {
  return run_forward(x, BnMode::train, &tape);
}

Tensor4 Model::run_forward(const Tensor4& x, BnMode mode, Tape* tape) {
  if (x.dims().c != graph_.input.c) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.dims().c) +
                                " channels, expected " +
                                std::to_string(graph_.input.c));
  }
  const std::size_t n = graph_.layers.size();
  std::vector<Tensor4> outputs(n);
  std::vector<std::vector<std::int64_t>> argmax(n);

  // without a tape, activations can be released once their last consumer ran
  std::vector<int> last_use(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    for (const std::string& in : graph_.layers[i].inputs) {
      last_use[static_cast<std::size_t>(graph_.layer_index(in))] =
          static_cast<int>(i);
    }
  }

  const int softmax_idx = static_cast<int>(n) - 1;
  const int logits_idx = graph_.layer_index(graph_.layers[softmax_idx].inputs[0]);

  for (int i = 0; i <= logits_idx; ++i) {
    const LayerSpec& l = graph_.layers[static_cast<std::size_t>(i)];
    auto in = [&](int slot) -> const Tensor4& {
      return outputs[static_cast<std::size_t>(graph_.layer_index(l.inputs[slot]))];
    };
    Tensor4 out;
    switch (l.kind) {
      case LayerKind::input:
        out = x;
        break;
      case LayerKind::conv:
        out = conv2d_forward(in(0), slots_[i].conv);
        break;
      case LayerKind::maxpool: {
        PoolResult r = maxpool_forward(in(0), l.kernel, l.stride);
        out = std::move(r.out);
        argmax[static_cast<std::size_t>(i)] = std::move(r.argmax);
        break;
      }
      case LayerKind::global_avgpool:
        out = global_avgpool_forward(in(0));
        break;
      case LayerKind::batchnorm:
        out = batchnorm_forward(in(0), slots_[i].bn, mode);
        break;
      case LayerKind::relu:
        out = relu_forward(in(0));
        break;
      case LayerKind::concat: {
        std::vector<const Tensor4*> parts;
        for (std::size_t s = 0; s < l.inputs.size(); ++s) {
          parts.push_back(&in(static_cast<int>(s)));
        }
        out = concat_channels(parts);
        break;
      }
      case LayerKind::linear:
        out = linear_forward(in(0), slots_[i].lin);
        break;
      case LayerKind::softmax:
        throw std::logic_error("softmax node reached during forward");
    }
    outputs[static_cast<std::size_t>(i)] = std::move(out);
    if (tape == nullptr) {
      for (int j = 0; j < i; ++j) {
        if (last_use[static_cast<std::size_t>(j)] == i && j != logits_idx) {
          outputs[static_cast<std::size_t>(j)] = Tensor4();
        }
      }
    }
  }

  Tensor4 result = outputs[static_cast<std::size_t>(logits_idx)];
  if (tape != nullptr) {
    tape->outputs = std::move(outputs);
    tape->argmax = std::move(argmax);
    tape->logits_layer = logits_idx;
  }
  return result;
}

void Model::backward(const Tape& tape, const Tensor4& grad_logits,
                     GradBuffers& grads) {
  const std::size_t n = graph_.layers.size();
  if (tape.logits_layer < 0 || tape.outputs.size() != n) {
    throw std::invalid_argument("backward: tape not produced by forward_train");
  }

  // starting index of each layer's gradient buffers
  std::vector<int> pbase(n, -1);
  {
    int pi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const LayerSpec& l = graph_.layers[i];
      pbase[i] = pi;
      if (l.kind == LayerKind::conv) pi += slots_[i].conv.bias.empty() ? 1 : 2;
      if (l.kind == LayerKind::batchnorm) pi += 2;
      if (l.kind == LayerKind::linear) pi += 2;
    }
  }
  if (grads.empty()) grads = make_grad_buffers();
  for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);

  std::vector<Tensor4> gout(n);
  gout[static_cast<std::size_t>(tape.logits_layer)] = grad_logits;

  auto accumulate = [&](int idx, Tensor4&& t) {
    Tensor4& dst = gout[static_cast<std::size_t>(idx)];
    if (dst.size() == 0) {
      dst = std::move(t);
    } else {
      for (std::int64_t i = 0; i < dst.size(); ++i) dst.data()[i] += t.data()[i];
    }
  };
  auto assign = [&](std::vector<float>& dst, const std::vector<float>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };

  for (int i = tape.logits_layer; i >= 0; --i) {
    Tensor4& go = gout[static_cast<std::size_t>(i)];
    if (go.size() == 0) continue;
    const LayerSpec& l = graph_.layers[static_cast<std::size_t>(i)];
    if (l.kind == LayerKind::input) continue;
    const int in_idx = graph_.layer_index(l.inputs[0]);
    const Tensor4& xin = tape.outputs[static_cast<std::size_t>(in_idx)];

    switch (l.kind) {
      case LayerKind::conv: {
        ConvGrads g = conv2d_backward(xin, slots_[i].conv, go);
        assign(grads[static_cast<std::size_t>(pbase[i])], g.grad_weight.vec());
        if (!g.grad_bias.empty()) {
          assign(grads[static_cast<std::size_t>(pbase[i] + 1)], g.grad_bias);
        }
        accumulate(in_idx, std::move(g.grad_x));
        break;
      }
      case LayerKind::maxpool:
        accumulate(in_idx, maxpool_backward(tape.argmax[static_cast<std::size_t>(i)],
                                            go, xin.dims()));
        break;
      case LayerKind::global_avgpool:
        accumulate(in_idx, global_avgpool_backward(go, xin.dims()));
        break;
      case LayerKind::batchnorm: {
        BnGrads g = batchnorm_backward(xin, slots_[i].bn, go);
        assign(grads[static_cast<std::size_t>(pbase[i])], g.grad_gamma);
        assign(grads[static_cast<std::size_t>(pbase[i] + 1)], g.grad_beta);
        accumulate(in_idx, std::move(g.grad_x));
        break;
      }
      case LayerKind::relu:
        accumulate(in_idx, relu_backward(xin, go));
        break;
      case LayerKind::concat: {
        std::vector<int> counts;
        for (const std::string& in : l.inputs) {
          counts.push_back(
              tape.outputs[static_cast<std::size_t>(graph_.layer_index(in))]
                  .dims()
                  .c);
        }
        std::vector<Tensor4> parts = split_channels(go, counts);
        for (std::size_t s = 0; s < l.inputs.size(); ++s) {
          accumulate(graph_.layer_index(l.inputs[s]), std::move(parts[s]));
        }
        break;
      }
      case LayerKind::linear: {
        LinearGrads g = linear_backward(xin, slots_[i].lin, go);
        assign(grads[static_cast<std::size_t>(pbase[i])], g.grad_weight);
        assign(grads[static_cast<std::size_t>(pbase[i] + 1)], g.grad_bias);
        accumulate(in_idx, std::move(g.grad_x));
        break;
      }
      default:
        throw std::logic_error("backward: unexpected layer kind");
    }
    go = Tensor4();  // release
  }
}

}  // namespace nulite
