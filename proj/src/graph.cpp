#include "nulite/graph.hpp"

#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "nulite/layers.hpp"

namespace nulite {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::global_avgpool: return "global_avgpool";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::concat: return "concat";
    case LayerKind::linear: return "linear";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

int NetGraph::layer_index(const std::string& id) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

void validate_graph(const NetGraph& g) {
  std::unordered_map<std::string, int> seen;
  int inputs = 0, softmaxes = 0;
  std::set<std::string> consumed;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (l.id.empty()) throw std::invalid_argument("graph: layer with empty id");
    if (!seen.emplace(l.id, static_cast<int>(i)).second) {
      throw std::invalid_argument("graph: duplicate layer id '" + l.id + "'");
    }
    const std::size_t arity = l.inputs.size();
    if (l.kind == LayerKind::input) {
      ++inputs;
      if (arity != 0) {
        throw std::invalid_argument("graph: input node '" + l.id + "' has inputs");
      }
    } else if (l.kind == LayerKind::concat) {
      if (arity < 2) {
        throw std::invalid_argument("graph: concat '" + l.id + "' needs >= 2 inputs");
      }
    } else if (arity != 1) {
      throw std::invalid_argument("graph: layer '" + l.id + "' needs exactly 1 input");
    }
    for (const std::string& in : l.inputs) {
      auto it = seen.find(in);
      if (it == seen.end()) {
        // either a forward reference (cycle under the topological-order
        // contract) or a dangling id
        throw std::invalid_argument("graph: layer '" + l.id +
                                    "' references unknown or later layer '" + in + "'");
      }
      consumed.insert(in);
    }
    if (l.kind == LayerKind::softmax) ++softmaxes;
  }
  if (inputs != 1) {
    throw std::invalid_argument("graph: expected exactly one input node, found " +
                                std::to_string(inputs));
  }
  if (softmaxes != 1) {
    throw std::invalid_argument("graph: expected exactly one softmax node, found " +
                                std::to_string(softmaxes));
  }
  const LayerSpec& last = g.layers.back();
  if (last.kind != LayerKind::softmax || consumed.count(last.id) != 0) {
    throw std::invalid_argument("graph: softmax must be the unconsumed sink");
  }
}

std::vector<Shape> propagate_shapes(const NetGraph& g) {
  validate_graph(g);
  std::unordered_map<std::string, Shape> by_id;
  std::vector<Shape> shapes;
  shapes.reserve(g.layers.size());

  auto fail = [](const LayerSpec& l, const std::string& why) -> Shape {
    throw std::invalid_argument("shape propagation failed at '" + l.id + "': " + why);
  };

  for (const LayerSpec& l : g.layers) {
    Shape out;
    try {
      switch (l.kind) {
        case LayerKind::input:
          out = g.input;
          break;
        case LayerKind::conv: {
          const Shape in = by_id.at(l.inputs[0]);
          out = {l.out_channels, conv2d_out_size(in.h, l.kernel, l.stride, l.pad),
                 conv2d_out_size(in.w, l.kernel, l.stride, l.pad)};
          break;
        }
        case LayerKind::maxpool: {
          const Shape in = by_id.at(l.inputs[0]);
          out = {in.c, pool_out_size(in.h, l.kernel, l.stride),
                 pool_out_size(in.w, l.kernel, l.stride)};
          break;
        }
        case LayerKind::global_avgpool: {
          const Shape in = by_id.at(l.inputs[0]);
          out = {in.c, 1, 1};
          break;
        }
        case LayerKind::batchnorm:
        case LayerKind::relu:
        case LayerKind::softmax:
          out = by_id.at(l.inputs[0]);
          break;
        case LayerKind::concat: {
          const Shape first = by_id.at(l.inputs[0]);
          out = first;
          out.c = 0;
          for (const std::string& in : l.inputs) {
            const Shape s = by_id.at(in);
            if (s.h != first.h || s.w != first.w) {
              fail(l, "concat inputs disagree on spatial size");
            }
            out.c += s.c;
          }
          break;
        }
        case LayerKind::linear: {
          const Shape in = by_id.at(l.inputs[0]);
          if (in.h != 1 || in.w != 1) {
            fail(l, "linear expects a (C,1,1) input");
          }
          out = {l.out_features, 1, 1};
          break;
        }
      }
    } catch (const std::invalid_argument& e) {
      fail(l, e.what());
    }
    by_id[l.id] = out;
    shapes.push_back(out);
  }
  return shapes;
}

// -- Builders ----------------------------------------------------------------

int NuLiteBlockSpec::squeeze_width() const {
  return variant == BlockVariant::A ? in_depth / 4 : in_depth;
}

void NuLiteBlockSpec::validate() const {
  if (in_depth < 2 || in_depth % 2 != 0) {
    throw std::invalid_argument("NuLiteBlockSpec: in_depth must be even and >= 2");
  }
  if (variant == BlockVariant::A && in_depth % 4 != 0) {
    throw std::invalid_argument("NuLiteBlockSpec: variant A needs in_depth divisible by 4");
  }
}

namespace {

// conv (no bias) -> batchnorm -> relu; returns the relu id
std::string add_conv_bn_relu(NetGraph& g, const std::string& id, int out_ch,
                             int kernel, int stride, int pad,
                             const std::string& input_id) {
  g.layers.push_back({id, LayerKind::conv, kernel, stride, pad, out_ch, 0, false,
                      {input_id}});
  g.layers.push_back({id + "/bn", LayerKind::batchnorm, 0, 1, 0, 0, 0, false, {id}});
  g.layers.push_back({id + "/relu", LayerKind::relu, 0, 1, 0, 0, 0, false,
                      {id + "/bn"}});
  return id + "/relu";
}

}  // namespace

std::string append_nu_lite_block(NetGraph& g, const std::string& name,
                                 const NuLiteBlockSpec& spec,
                                 const std::string& input_id) {
  spec.validate();
  const std::string squeeze = add_conv_bn_relu(
      g, name + "/squeeze", spec.squeeze_width(), 1, 1, 0, input_id);
  // kernels 1/3/5/7 with pads 0/1/2/3 keep the spatial size equal for concat
  std::vector<std::string> branches;
  for (int k : {1, 3, 5, 7}) {
    const std::string id =
        name + "/expand" + std::to_string(k) + "x" + std::to_string(k);
    branches.push_back(
        add_conv_bn_relu(g, id, spec.branch_width(), k, 1, (k - 1) / 2, squeeze));
  }
  const std::string concat_id = name + "/concat";
  g.layers.push_back({concat_id, LayerKind::concat, 0, 1, 0, 0, 0, false, branches});
  return concat_id;
}

NetGraph build_nu_litenet(BlockVariant variant, int num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("build_nu_litenet: num_classes must be >= 2");
  }
  NetGraph g;
  g.arch_id = variant == BlockVariant::A ? "nu-lite-a" : "nu-lite-b";
  g.input = {3, 224, 224};
  g.num_classes = num_classes;

  g.layers.push_back({"Input", LayerKind::input, 0, 1, 0, 0, 0, false, {}});
  std::string cur = add_conv_bn_relu(g, "Convolution 1", 64, 5, 2, 3, "Input");
  g.layers.push_back({"Pooling 1", LayerKind::maxpool, 3, 2, 0, 0, 0, false, {cur}});
  // stride 1 despite the "stride 2" cell: the declared 56x56 output and the
  // downstream sizes are only consistent with stride 1
  cur = add_conv_bn_relu(g, "Convolution 2", 64, 1, 1, 0, "Pooling 1");
  cur = add_conv_bn_relu(g, "Convolution 3", 64, 3, 1, 1, cur);
  g.layers.push_back({"Pooling 2", LayerKind::maxpool, 3, 2, 0, 0, 0, false, {cur}});
  cur = append_nu_lite_block(g, "NU-Lite-Block 1", {variant, 64}, "Pooling 2");
  g.layers.push_back({"Pooling 3", LayerKind::maxpool, 3, 2, 0, 0, 0, false, {cur}});
  cur = append_nu_lite_block(g, "NU-Lite-Block 2", {variant, 128}, "Pooling 3");
  g.layers.push_back({"Pooling 4", LayerKind::global_avgpool, 0, 1, 0, 0, 0, false,
                      {cur}});
  g.layers.push_back({"Fully connected", LayerKind::linear, 0, 1, 0, 0, num_classes,
                      true, {"Pooling 4"}});
  g.layers.push_back({"Softmax", LayerKind::softmax, 0, 1, 0, 0, 0, false,
                      {"Fully connected"}});
  validate_graph(g);
  return g;
}

namespace {

std::string add_fire(NetGraph& g, const std::string& name, int squeeze,
                     int expand, const std::string& input_id) {
  const std::string s =
      add_conv_bn_relu(g, name + "/squeeze1x1", squeeze, 1, 1, 0, input_id);
  const std::string e1 =
      add_conv_bn_relu(g, name + "/expand1x1", expand, 1, 1, 0, s);
  const std::string e3 =
      add_conv_bn_relu(g, name + "/expand3x3", expand, 3, 1, 1, s);
  g.layers.push_back({name + "/concat", LayerKind::concat, 0, 1, 0, 0, 0, false,
                      {e1, e3}});
  return name + "/concat";
}

}  // namespace

NetGraph build_squeezenet(int num_classes) {
  if (num_classes < 2) {
    throw std::invalid_argument("build_squeezenet: num_classes must be >= 2");
  }
  NetGraph g;
  g.arch_id = "squeezenet";
  g.input = {3, 224, 224};
  g.num_classes = num_classes;

  g.layers.push_back({"Input", LayerKind::input, 0, 1, 0, 0, 0, false, {}});
  std::string cur = add_conv_bn_relu(g, "conv1", 96, 7, 2, 0, "Input");
  g.layers.push_back({"pool1", LayerKind::maxpool, 3, 2, 0, 0, 0, false, {cur}});
  cur = add_fire(g, "fire2", 16, 64, "pool1");
  cur = add_fire(g, "fire3", 16, 64, cur);
  cur = add_fire(g, "fire4", 32, 128, cur);
  g.layers.push_back({"pool4", LayerKind::maxpool, 3, 2, 0, 0, 0, false, {cur}});
  cur = add_fire(g, "fire5", 32, 128, "pool4");
  cur = add_fire(g, "fire6", 48, 192, cur);
  cur = add_fire(g, "fire7", 48, 192, cur);
  cur = add_fire(g, "fire8", 64, 256, cur);
  g.layers.push_back({"pool8", LayerKind::maxpool, 3, 2, 0, 0, 0, false, {cur}});
  cur = add_fire(g, "fire9", 64, 256, "pool8");
  cur = add_conv_bn_relu(g, "conv10", num_classes, 1, 1, 0, cur);
  g.layers.push_back({"pool10", LayerKind::global_avgpool, 0, 1, 0, 0, 0, false,
                      {cur}});
  g.layers.push_back({"Softmax", LayerKind::softmax, 0, 1, 0, 0, 0, false,
                      {"pool10"}});
  validate_graph(g);
  return g;
}

NetGraph build_arch(const std::string& arch_id, int num_classes) {
  if (arch_id == "nu-lite-a") return build_nu_litenet(BlockVariant::A, num_classes);
  if (arch_id == "nu-lite-b") return build_nu_litenet(BlockVariant::B, num_classes);
  if (arch_id == "squeezenet") return build_squeezenet(num_classes);
  throw std::invalid_argument("unknown architecture '" + arch_id +
                              "' (valid: nu-lite-a, nu-lite-b, squeezenet)");
}

// -- Accounting --------------------------------------------------------------

namespace {

CostReport analyze(const NetGraph& g, Shape input) {
  NetGraph sized = g;
  sized.input = input;
  const std::vector<Shape> shapes = propagate_shapes(sized);

  CostReport report;
  std::unordered_map<std::string, Shape> by_id;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const Shape out = shapes[i];
    by_id[l.id] = out;

    CostRow row{l.id, l.kind, out, 0, 0};
    switch (l.kind) {
      case LayerKind::conv: {
        const Shape in = by_id.at(l.inputs[0]);
        const std::int64_t k2 = static_cast<std::int64_t>(l.kernel) * l.kernel;
        row.params = static_cast<std::int64_t>(l.out_channels) * in.c * k2 +
                     (l.has_bias ? l.out_channels : 0);
        row.macs = static_cast<std::int64_t>(out.c) * out.h * out.w * in.c * k2;
        break;
      }
      case LayerKind::batchnorm:
        row.params = 2 * static_cast<std::int64_t>(out.c);  // gamma + beta
        break;
      case LayerKind::linear: {
        const Shape in = by_id.at(l.inputs[0]);
        row.params = static_cast<std::int64_t>(in.c) * l.out_features + l.out_features;
        row.macs = static_cast<std::int64_t>(in.c) * l.out_features;
        break;
      }
      default:
        break;
    }
    report.total_params += row.params;
    report.total_macs += row.macs;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace

CostReport count_params(const NetGraph& g) { return analyze(g, g.input); }
CostReport count_macs(const NetGraph& g) { return analyze(g, g.input); }
CostReport count_macs(const NetGraph& g, Shape input) { return analyze(g, input); }

// -- Description table -------------------------------------------------------

namespace {

std::string config_string(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::input:
      return "-";
    case LayerKind::conv: {
      std::ostringstream os;
      os << l.kernel << "x" << l.kernel << "," << l.out_channels << ",s"
         << l.stride << ",p" << l.pad;
      return os.str();
    }
    case LayerKind::maxpool: {
      std::ostringstream os;
      os << "max pool, " << l.kernel << "x" << l.kernel << ", stride " << l.stride;
      return os.str();
    }
    case LayerKind::global_avgpool:
      return "average pool";
    case LayerKind::batchnorm:
      return "bn";
    case LayerKind::relu:
      return "relu";
    case LayerKind::concat:
      return "concat x" + std::to_string(l.inputs.size());
    case LayerKind::linear:
      return "fc " + std::to_string(l.out_features);
    case LayerKind::softmax:
      return "softmax";
  }
  return "?";
}

std::string size_string(const LayerSpec& l, const Shape& s) {
  if (l.kind == LayerKind::linear || l.kind == LayerKind::softmax) {
    return std::to_string(s.c);
  }
  return std::to_string(s.h) + "x" + std::to_string(s.w);
}

}  // namespace

std::string describe(const NetGraph& g) {
  const CostReport report = count_params(g);
  std::ostringstream os;
  os << g.arch_id << " (" << g.num_classes << " classes, input " << g.input.c
     << "x" << g.input.h << "x" << g.input.w << ")\n";
  os << "layer | config | output size | params\n";
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const CostRow& row = report.rows[i];
    os << l.id << " | " << config_string(l) << " | " << size_string(l, row.out)
       << " | " << row.params << "\n";
  }
  char mstr[32];
  std::snprintf(mstr, sizeof(mstr), "%.2f",
                static_cast<double>(report.total_params) / 1e6);
  os << "Total params: " << report.total_params << " (" << mstr << "M)\n";
  return os.str();
}

}  // namespace nulite
