#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sinfer/crc32.hpp"
#include "sinfer/errors.hpp"
#include "sinfer/prng.hpp"
#include "sinfer/ring.hpp"
#include "sinfer/tensor.hpp"

namespace sinfer {

enum class LayerKind {
  Conv,
  BatchNorm,
  Relu,
  MaxPool,
  AvgPool,
  GlobalAvgPool,
  Dense,
  ResidualAdd,
  Identity,
};

// One node of the layer graph.  `input` is the producing node index, or -1
// for the model input; `input2` is the second operand of a residual join.
struct LayerSpec {
  LayerKind kind = LayerKind::Identity;
  int input = -1;
  int input2 = -1;
  size_t c_out = 0, kh = 0, kw = 0, stride = 1, pad = 0;
  size_t units = 0;
  size_t k = 0, pool_stride = 0, pool_pad = 0;
};

struct ModelSpec {
  size_t in_c = 0, in_h = 0, in_w = 0;
  size_t classes = 0;
  std::vector<LayerSpec> layers;
};

// Shape flowing between nodes: a feature map or a flat vector.
struct DataShape {
  bool flat = false;
  size_t c = 0, h = 0, w = 0;
  size_t len() const { return flat ? c : c * h * w; }
  bool operator==(const DataShape&) const = default;
};

namespace detail {

inline DataShape input_shape_of(const ModelSpec& spec,
                                const std::vector<DataShape>& shapes, int ref,
                                size_t node) {
  if (ref == -1) return DataShape{false, spec.in_c, spec.in_h, spec.in_w};
  if (ref < 0 || ref >= static_cast<int>(node))
    throw ShapeError("node " + std::to_string(node) + " reads invalid node " +
                     std::to_string(ref));
  return shapes[ref];
}

}  // namespace detail

inline ConvGeom conv_geom(const LayerSpec& l, const DataShape& in) {
  return ConvGeom{.c_in = in.c, .h = in.h, .w = in.w, .c_out = l.c_out,
                  .kh = l.kh, .kw = l.kw, .stride = l.stride, .pad = l.pad};
}

inline PoolGeom pool_geom(const LayerSpec& l, const DataShape& in) {
  return PoolGeom{.channels = in.c, .h = in.h, .w = in.w, .k = l.k,
                  .stride = l.pool_stride, .pad = l.pool_pad};
}

// Propagates shapes through the graph, throwing on any inconsistency.
inline std::vector<DataShape> validate_spec(const ModelSpec& spec) {
  if (spec.in_c == 0 || spec.in_h == 0 || spec.in_w == 0)
    throw ShapeError("empty input shape");
  if (spec.classes == 0) throw ShapeError("a model needs at least one class");
  if (spec.layers.empty()) throw ShapeError("a model needs at least one layer");

  std::vector<DataShape> shapes;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    DataShape in = detail::input_shape_of(spec, shapes, l.input, i);
    DataShape out;
    switch (l.kind) {
      case LayerKind::Conv: {
        if (in.flat) throw ShapeError("convolution over a flat vector");
        ConvGeom g = conv_geom(l, in);
        if (!g.valid()) throw ShapeError("bad convolution geometry at node " + std::to_string(i));
        out = {false, g.c_out, g.out_h(), g.out_w()};
        break;
      }
      case LayerKind::BatchNorm:
        if (in.flat) throw ShapeError("normalization over a flat vector");
        out = in;
        break;
      case LayerKind::Relu:
      case LayerKind::Identity:
        out = in;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        if (in.flat) throw ShapeError("pooling over a flat vector");
        PoolGeom g = pool_geom(l, in);
        if (!g.valid()) throw ShapeError("bad pooling geometry at node " + std::to_string(i));
        out = {false, in.c, g.out_h(), g.out_w()};
        break;
      }
      case LayerKind::GlobalAvgPool:
        if (in.flat) throw ShapeError("pooling over a flat vector");
        out = {true, in.c, 0, 0};
        break;
      case LayerKind::Dense:
        if (!in.flat) throw ShapeError("dense layer expects a flat vector at node " + std::to_string(i));
        if (l.units == 0) throw ShapeError("dense layer with no outputs");
        out = {true, l.units, 0, 0};
        break;
      case LayerKind::ResidualAdd: {
        DataShape in2 = detail::input_shape_of(spec, shapes, l.input2, i);
        if (in.flat || !(in == in2))
          throw ShapeError("residual join over mismatched shapes at node " + std::to_string(i));
        out = in;
        break;
      }
    }
    shapes.push_back(out);
  }
  const DataShape& last = shapes.back();
  if (!last.flat || last.c != spec.classes)
    throw ShapeError("final layer does not produce one score per class");
  return shapes;
}

// ---- canonical architecture text ----

inline std::string canonical_text(const ModelSpec& spec) {
  std::ostringstream os;
  os << "arch v1\n";
  os << "input " << spec.in_c << " " << spec.in_h << " " << spec.in_w << "\n";
  os << "classes " << spec.classes << "\n";
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    int dflt = static_cast<int>(i) - 1;
    switch (l.kind) {
      case LayerKind::Conv:
        os << "conv out " << l.c_out << " k " << l.kh << " " << l.kw
           << " stride " << l.stride << " pad " << l.pad;
        break;
      case LayerKind::BatchNorm: os << "batchnorm"; break;
      case LayerKind::Relu: os << "relu"; break;
      case LayerKind::MaxPool:
        os << "maxpool k " << l.k << " stride " << l.pool_stride << " pad " << l.pool_pad;
        break;
      case LayerKind::AvgPool:
        os << "avgpool k " << l.k << " stride " << l.pool_stride << " pad " << l.pool_pad;
        break;
      case LayerKind::GlobalAvgPool: os << "gap"; break;
      case LayerKind::Dense: os << "dense out " << l.units; break;
      case LayerKind::ResidualAdd:
        os << "residual add " << l.input2;
        break;
      case LayerKind::Identity: os << "identity"; break;
    }
    if (l.input != dflt) os << " from " << l.input;
    os << "\n";
  }
  return os.str();
}

inline ModelSpec parse_arch_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  ModelSpec spec;
  if (!std::getline(is, line) || line != "arch v1")
    throw FormatError("unknown architecture text header");

  auto fail = [](const std::string& l) -> void {
    throw FormatError("bad architecture line: " + l);
  };

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    LayerSpec l;
    l.input = static_cast<int>(spec.layers.size()) - 1;
    bool is_layer = true;

    if (word == "input") {
      if (!(ls >> spec.in_c >> spec.in_h >> spec.in_w)) fail(line);
      is_layer = false;
    } else if (word == "classes") {
      if (!(ls >> spec.classes)) fail(line);
      is_layer = false;
    } else if (word == "conv") {
      std::string t;
      l.kind = LayerKind::Conv;
      if (!(ls >> t >> l.c_out) || t != "out") fail(line);
      if (!(ls >> t >> l.kh >> l.kw) || t != "k") fail(line);
      if (!(ls >> t >> l.stride) || t != "stride") fail(line);
      if (!(ls >> t >> l.pad) || t != "pad") fail(line);
    } else if (word == "batchnorm") {
      l.kind = LayerKind::BatchNorm;
    } else if (word == "relu") {
      l.kind = LayerKind::Relu;
    } else if (word == "maxpool" || word == "avgpool") {
      std::string t;
      l.kind = word == "maxpool" ? LayerKind::MaxPool : LayerKind::AvgPool;
      if (!(ls >> t >> l.k) || t != "k") fail(line);
      if (!(ls >> t >> l.pool_stride) || t != "stride") fail(line);
      if (!(ls >> t >> l.pool_pad) || t != "pad") fail(line);
    } else if (word == "gap") {
      l.kind = LayerKind::GlobalAvgPool;
    } else if (word == "dense") {
      std::string t;
      l.kind = LayerKind::Dense;
      if (!(ls >> t >> l.units) || t != "out") fail(line);
    } else if (word == "residual") {
      std::string t;
      l.kind = LayerKind::ResidualAdd;
      if (!(ls >> t >> l.input2) || t != "add") fail(line);
    } else if (word == "identity") {
      l.kind = LayerKind::Identity;
    } else {
      fail(line);
    }

    if (is_layer) {
      std::string t;
      if (ls >> t) {
        if (t != "from") fail(line);
        if (!(ls >> l.input)) fail(line);
      }
      spec.layers.push_back(l);
    }
  }
  validate_spec(spec);
  return spec;
}

// ---- reference architectures ----

// Compact desk-scale network: two 3x3 convolution/rectifier stages with a
// pooling step between, global average pooling, and a class head.
inline ModelSpec desk_spec(size_t classes = 8) {
  ModelSpec spec;
  spec.in_c = 3;
  spec.in_h = 32;
  spec.in_w = 32;
  spec.classes = classes;
  auto add = [&](LayerSpec l) {
    l.input = static_cast<int>(spec.layers.size()) - 1;
    spec.layers.push_back(l);
    return static_cast<int>(spec.layers.size()) - 1;
  };
  add({.kind = LayerKind::Conv, .c_out = 8, .kh = 3, .kw = 3, .stride = 1, .pad = 1});
  add({.kind = LayerKind::Relu});
  add({.kind = LayerKind::MaxPool, .k = 2, .pool_stride = 2, .pool_pad = 0});
  add({.kind = LayerKind::Conv, .c_out = 16, .kh = 3, .kw = 3, .stride = 1, .pad = 1});
  add({.kind = LayerKind::Relu});
  add({.kind = LayerKind::GlobalAvgPool});
  add({.kind = LayerKind::Dense, .units = classes});
  validate_spec(spec);
  return spec;
}

// 50-layer residual network with bottleneck blocks [3, 4, 6, 3] over a
// 3x224x224 input.
inline ModelSpec resnet50_spec(size_t classes = 8) {
  ModelSpec spec;
  spec.in_c = 3;
  spec.in_h = 224;
  spec.in_w = 224;
  spec.classes = classes;

  auto seq = [&](LayerSpec l) {
    l.input = static_cast<int>(spec.layers.size()) - 1;
    spec.layers.push_back(l);
    return static_cast<int>(spec.layers.size()) - 1;
  };

  seq({.kind = LayerKind::Conv, .c_out = 64, .kh = 7, .kw = 7, .stride = 2, .pad = 3});
  seq({.kind = LayerKind::BatchNorm});
  seq({.kind = LayerKind::Relu});
  seq({.kind = LayerKind::MaxPool, .k = 3, .pool_stride = 2, .pool_pad = 1});

  size_t blocks[4] = {3, 4, 6, 3};
  size_t in_ch = 64;
  for (int stage = 0; stage < 4; ++stage) {
    size_t mid = 64ull << stage;
    size_t out_ch = mid * 4;
    for (size_t b = 0; b < blocks[stage]; ++b) {
      size_t stride = (stage > 0 && b == 0) ? 2 : 1;
      int block_in = static_cast<int>(spec.layers.size()) - 1;

      seq({.kind = LayerKind::Conv, .c_out = mid, .kh = 1, .kw = 1, .stride = 1, .pad = 0});
      seq({.kind = LayerKind::BatchNorm});
      seq({.kind = LayerKind::Relu});
      seq({.kind = LayerKind::Conv, .c_out = mid, .kh = 3, .kw = 3, .stride = stride, .pad = 1});
      seq({.kind = LayerKind::BatchNorm});
      seq({.kind = LayerKind::Relu});
      seq({.kind = LayerKind::Conv, .c_out = out_ch, .kh = 1, .kw = 1, .stride = 1, .pad = 0});
      int main_out = seq({.kind = LayerKind::BatchNorm});

      int skip = block_in;
      if (b == 0 && (in_ch != out_ch || stride != 1)) {
        LayerSpec ds{.kind = LayerKind::Conv, .c_out = out_ch, .kh = 1, .kw = 1,
                     .stride = stride, .pad = 0};
        ds.input = block_in;
        spec.layers.push_back(ds);
        skip = seq({.kind = LayerKind::BatchNorm});
      }
      LayerSpec res{.kind = LayerKind::ResidualAdd};
      res.input = main_out;
      res.input2 = skip;
      spec.layers.push_back(res);
      seq({.kind = LayerKind::Relu});
      in_ch = out_ch;
    }
  }
  seq({.kind = LayerKind::GlobalAvgPool});
  seq({.kind = LayerKind::Dense, .units = classes});
  validate_spec(spec);
  return spec;
}

// ---- weights ----

struct ModelWeights {
  std::map<std::string, Tensor<double>> t;
};

inline std::string tensor_name(size_t node, const char* part) {
  return "l" + std::to_string(node) + "." + part;
}

// Expected tensor names and shapes for a spec.
inline std::map<std::string, std::vector<size_t>> weight_plan(const ModelSpec& spec) {
  std::vector<DataShape> shapes = validate_spec(spec);
  std::map<std::string, std::vector<size_t>> plan;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    DataShape in = detail::input_shape_of(spec, shapes, l.input, i);
    switch (l.kind) {
      case LayerKind::Conv:
        plan[tensor_name(i, "weight")] = {l.c_out, in.c, l.kh, l.kw};
        plan[tensor_name(i, "bias")] = {l.c_out};
        break;
      case LayerKind::BatchNorm:
        for (const char* part : {"gamma", "beta", "mean", "var"})
          plan[tensor_name(i, part)] = {in.c};
        break;
      case LayerKind::Dense:
        plan[tensor_name(i, "weight")] = {l.units, in.c};
        plan[tensor_name(i, "bias")] = {l.units};
        break;
      default:
        break;
    }
  }
  return plan;
}

inline void validate_weights(const ModelSpec& spec, const ModelWeights& w) {
  auto plan = weight_plan(spec);
  for (const auto& [name, shape] : plan) {
    auto it = w.t.find(name);
    if (it == w.t.end()) throw ShapeError("missing weight tensor " + name);
    if (it->second.shape != shape) throw ShapeError("wrong shape for tensor " + name);
  }
  for (const auto& [name, tensor] : w.t)
    if (!plan.count(name)) throw ShapeError("unexpected weight tensor " + name);
}

// Deterministic synthetic weights: zero-mean normal filters scaled by
// sqrt(2 / fan_in) times `scale`, small uniform biases, and benign
// normalization statistics.
inline ModelWeights gen_weights(const ModelSpec& spec, uint64_t seed, double scale = 1.0) {
  ModelWeights w;
  Prg g = Prg::from_seed(seed_from_u64(seed), 0x77656967);
  auto normal = [&]() {
    double u1 = g.next_double(1e-12, 1.0);
    double u2 = g.next_double(0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  };
  for (const auto& [name, shape] : weight_plan(spec)) {
    Tensor<double> t(shape);
    bool is_weight = name.size() > 7 && name.rfind(".weight") == name.size() - 7;
    bool is_bias = name.size() > 5 && name.rfind(".bias") == name.size() - 5;
    if (is_weight) {
      size_t fan_in = 1;
      for (size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
      double std_dev = scale * std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : t.data) v = normal() * std_dev;
    } else if (is_bias) {
      for (auto& v : t.data) v = g.next_double(-0.05, 0.05);
    } else if (name.rfind(".gamma") != std::string::npos) {
      for (auto& v : t.data) v = g.next_double(0.8, 1.2);
    } else if (name.rfind(".beta") != std::string::npos) {
      for (auto& v : t.data) v = g.next_double(-0.1, 0.1);
    } else if (name.rfind(".mean") != std::string::npos) {
      for (auto& v : t.data) v = g.next_double(-0.1, 0.1);
    } else {
      for (auto& v : t.data) v = g.next_double(0.5, 1.5);
    }
    w.t[name] = std::move(t);
  }
  return w;
}

// Folds every normalization node into the convolution that feeds it; the
// node itself becomes a passthrough.  Scale-down engines require a folded
// model.
inline void fold_batchnorm(ModelSpec& spec, ModelWeights& w) {
  constexpr double eps = 1e-5;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind != LayerKind::BatchNorm) continue;
    int src = spec.layers[i].input;
    if (src < 0 || spec.layers[src].kind != LayerKind::Conv)
      throw ShapeError("normalization node " + std::to_string(i) +
                       " does not follow a convolution");
    Tensor<double>& weight = w.t.at(tensor_name(src, "weight"));
    Tensor<double>& bias = w.t.at(tensor_name(src, "bias"));
    const Tensor<double>& gamma = w.t.at(tensor_name(i, "gamma"));
    const Tensor<double>& beta = w.t.at(tensor_name(i, "beta"));
    const Tensor<double>& mean = w.t.at(tensor_name(i, "mean"));
    const Tensor<double>& var = w.t.at(tensor_name(i, "var"));
    size_t c_out = weight.shape[0];
    size_t per_filter = weight.numel() / c_out;
    for (size_t c = 0; c < c_out; ++c) {
      double s = gamma.data[c] / std::sqrt(var.data[c] + eps);
      for (size_t j = 0; j < per_filter; ++j) weight.data[c * per_filter + j] *= s;
      bias.data[c] = (bias.data[c] - mean.data[c]) * s + beta.data[c];
    }
    for (const char* part : {"gamma", "beta", "mean", "var"})
      w.t.erase(tensor_name(i, part));
    spec.layers[i].kind = LayerKind::Identity;
  }
}

// ---- float engine ----

inline std::vector<double> infer_float(const ModelSpec& spec, const ModelWeights& w,
                                       const std::vector<double>& input) {
  std::vector<DataShape> shapes = validate_spec(spec);
  if (input.size() != spec.in_c * spec.in_h * spec.in_w)
    throw ShapeError("input length does not match the model input");

  std::vector<std::vector<double>> outs(spec.layers.size());
  auto value_of = [&](int ref) -> const std::vector<double>& {
    return ref == -1 ? input : outs[ref];
  };

  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    DataShape in = detail::input_shape_of(spec, shapes, l.input, i);
    const std::vector<double>& x = value_of(l.input);
    std::vector<double>& y = outs[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        ConvGeom g = conv_geom(l, in);
        Tensor<double> patches = im2col(g, x.data());
        const Tensor<double>& weight = w.t.at(tensor_name(i, "weight"));
        const Tensor<double>& bias = w.t.at(tensor_name(i, "bias"));
        size_t m = g.rows(), kk = g.cols(), n = g.c_out;
        y.assign(m * n, 0.0);
        for (size_t r = 0; r < m; ++r)
          for (size_t c = 0; c < kk; ++c) {
            double pv = patches.data[r * kk + c];
            if (pv == 0.0) continue;
            for (size_t o = 0; o < n; ++o) y[r * n + o] += pv * weight.data[o * kk + c];
          }
        std::vector<double> chw(n * m);
        for (size_t o = 0; o < n; ++o)
          for (size_t r = 0; r < m; ++r) chw[o * m + r] = y[r * n + o] + bias.data[o];
        y = std::move(chw);
        break;
      }
      case LayerKind::BatchNorm: {
        const Tensor<double>& gamma = w.t.at(tensor_name(i, "gamma"));
        const Tensor<double>& beta = w.t.at(tensor_name(i, "beta"));
        const Tensor<double>& mean = w.t.at(tensor_name(i, "mean"));
        const Tensor<double>& var = w.t.at(tensor_name(i, "var"));
        size_t hw = in.h * in.w;
        y.resize(x.size());
        for (size_t c = 0; c < in.c; ++c) {
          double s = gamma.data[c] / std::sqrt(var.data[c] + 1e-5);
          for (size_t j = 0; j < hw; ++j)
            y[c * hw + j] = (x[c * hw + j] - mean.data[c]) * s + beta.data[c];
        }
        break;
      }
      case LayerKind::Relu:
        y.resize(x.size());
        for (size_t j = 0; j < x.size(); ++j) y[j] = x[j] > 0 ? x[j] : 0.0;
        break;
      case LayerKind::Identity:
        y = x;
        break;
      case LayerKind::MaxPool: {
        PoolGeom g = pool_geom(l, in);
        y.resize(g.windows());
        std::vector<size_t> offs;
        size_t idx = 0;
        for (size_t c = 0; c < g.channels; ++c)
          for (size_t oy = 0; oy < g.out_h(); ++oy)
            for (size_t ox = 0; ox < g.out_w(); ++ox) {
              g.window_offsets(c, oy, ox, offs);
              double best = x[offs[0]];
              for (size_t off : offs) best = std::max(best, x[off]);
              y[idx++] = best;
            }
        break;
      }
      case LayerKind::AvgPool: {
        PoolGeom g = pool_geom(l, in);
        y.resize(g.windows());
        std::vector<size_t> offs;
        size_t idx = 0;
        double recip = 1.0 / static_cast<double>(l.k * l.k);
        for (size_t c = 0; c < g.channels; ++c)
          for (size_t oy = 0; oy < g.out_h(); ++oy)
            for (size_t ox = 0; ox < g.out_w(); ++ox) {
              g.window_offsets(c, oy, ox, offs);
              double sum = 0;
              for (size_t off : offs) sum += x[off];
              y[idx++] = sum * recip;
            }
        break;
      }
      case LayerKind::GlobalAvgPool: {
        size_t hw = in.h * in.w;
        y.resize(in.c);
        for (size_t c = 0; c < in.c; ++c) {
          double sum = 0;
          for (size_t j = 0; j < hw; ++j) sum += x[c * hw + j];
          y[c] = sum / static_cast<double>(hw);
        }
        break;
      }
      case LayerKind::Dense: {
        const Tensor<double>& weight = w.t.at(tensor_name(i, "weight"));
        const Tensor<double>& bias = w.t.at(tensor_name(i, "bias"));
        y.resize(l.units);
        size_t in_len = in.len();
        for (size_t u = 0; u < l.units; ++u) {
          double acc = bias.data[u];
          for (size_t j = 0; j < in_len; ++j) acc += weight.data[u * in_len + j] * x[j];
          y[u] = acc;
        }
        break;
      }
      case LayerKind::ResidualAdd: {
        const std::vector<double>& x2 = value_of(l.input2);
        y.resize(x.size());
        for (size_t j = 0; j < x.size(); ++j) y[j] = x[j] + x2[j];
        break;
      }
    }
  }
  return outs.back();
}

// ---- fixed-point engine ----

// Encoded weights at one precision.
struct QuantizedModel {
  int word_bits = 64;
  int precision = 4;
  std::map<std::string, std::vector<uint64_t>> t;
};

inline QuantizedModel quantize_weights(const ModelSpec& spec, const ModelWeights& w,
                                       const FixedCodec& codec) {
  validate_weights(spec, w);
  QuantizedModel q;
  q.word_bits = codec.ring.bits;
  q.precision = codec.precision;
  for (const auto& [name, tensor] : w.t) {
    std::vector<uint64_t> enc(tensor.numel());
    for (size_t j = 0; j < enc.size(); ++j) {
      try {
        enc[j] = codec.encode(tensor.data[j]);
      } catch (const OverflowError&) {
        throw OverflowError("weight tensor " + name + " exceeds the fixed-point range");
      }
    }
    q.t[name] = std::move(enc);
  }
  return q;
}

namespace detail {

inline void check_magnitude(const Ring& ring, __int128 v, uint64_t bound,
                            size_t node, const char* what) {
  (void)ring;
  __int128 b = static_cast<__int128>(bound);
  if (v > b || v < -b)
    throw OverflowError(std::string(what) + " overflow in layer " + std::to_string(node));
}

}  // namespace detail

// Runs the shared-arithmetic data flow on plain ring words: every product
// of encodings is scaled back with floor division, sums are watched for
// leaving the safe range, and the results are bit-compatible with the
// secure evaluation.  The spec must be normalization-free (fold first).
inline std::vector<uint64_t> infer_fixed(const ModelSpec& spec, const QuantizedModel& q,
                                         const FixedCodec& codec,
                                         const std::vector<uint64_t>& input) {
  const Ring& ring = codec.ring;
  std::vector<DataShape> shapes = validate_spec(spec);
  if (input.size() != spec.in_c * spec.in_h * spec.in_w)
    throw ShapeError("input length does not match the model input");
  uint64_t value_bound = ring.half() - 1;
  uint64_t trunc_bound = trunc_offset(ring, codec.scale);

  std::vector<std::vector<uint64_t>> outs(spec.layers.size());
  auto value_of = [&](int ref) -> const std::vector<uint64_t>& {
    return ref == -1 ? input : outs[ref];
  };

  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    DataShape in = detail::input_shape_of(spec, shapes, l.input, i);
    const std::vector<uint64_t>& x = value_of(l.input);
    std::vector<uint64_t>& y = outs[i];
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense: {
        bool dense = l.kind == LayerKind::Dense;
        size_t m, kk, n;
        Tensor<uint64_t> patches;
        if (dense) {
          m = 1;
          kk = in.len();
          n = l.units;
        } else {
          ConvGeom g = conv_geom(l, in);
          patches = im2col(g, x.data());
          m = g.rows();
          kk = g.cols();
          n = g.c_out;
        }
        const std::vector<uint64_t>& weight = q.t.at(tensor_name(i, "weight"));
        const std::vector<uint64_t>& bias = q.t.at(tensor_name(i, "bias"));
        const uint64_t* px = dense ? x.data() : patches.data.data();

        std::vector<uint64_t> prod(m * n);
        for (size_t r = 0; r < m; ++r) {
          for (size_t o = 0; o < n; ++o) {
            __int128 acc = 0;
            for (size_t c = 0; c < kk; ++c) {
              int64_t a = ring.to_signed(px[r * kk + c]);
              int64_t b = ring.to_signed(weight[o * kk + c]);
              acc += static_cast<__int128>(a) * b;
            }
            detail::check_magnitude(ring, acc, value_bound, i, "accumulation");
            detail::check_magnitude(ring, acc, trunc_bound, i, "pre-scaling");
            prod[r * n + o] = ring.reduce(static_cast<uint64_t>(acc));
          }
        }
        y.assign(m * n, 0);
        for (size_t r = 0; r < m; ++r)
          for (size_t o = 0; o < n; ++o) {
            uint64_t t = codec.truncate_plain(prod[r * n + o]);
            __int128 sum = static_cast<__int128>(ring.to_signed(t)) +
                           ring.to_signed(bias[o]);
            detail::check_magnitude(ring, sum, value_bound, i, "bias");
            y[dense ? o : o * m + r] = ring.reduce(static_cast<uint64_t>(sum));
          }
        break;
      }
      case LayerKind::Relu:
        y.resize(x.size());
        for (size_t j = 0; j < x.size(); ++j)
          y[j] = ring.to_signed(x[j]) >= 0 ? x[j] : 0;
        break;
      case LayerKind::Identity:
        y = x;
        break;
      case LayerKind::MaxPool: {
        PoolGeom g = pool_geom(l, in);
        y.resize(g.windows());
        std::vector<size_t> offs;
        size_t idx = 0;
        for (size_t c = 0; c < g.channels; ++c)
          for (size_t oy = 0; oy < g.out_h(); ++oy)
            for (size_t ox = 0; ox < g.out_w(); ++ox) {
              g.window_offsets(c, oy, ox, offs);
              int64_t best = ring.to_signed(x[offs[0]]);
              for (size_t off : offs) best = std::max(best, ring.to_signed(x[off]));
              y[idx++] = ring.from_signed(best);
            }
        break;
      }
      case LayerKind::AvgPool: {
        PoolGeom g = pool_geom(l, in);
        uint64_t recip = codec.encode(1.0 / static_cast<double>(l.k * l.k));
        y.resize(g.windows());
        std::vector<size_t> offs;
        size_t idx = 0;
        for (size_t c = 0; c < g.channels; ++c)
          for (size_t oy = 0; oy < g.out_h(); ++oy)
            for (size_t ox = 0; ox < g.out_w(); ++ox) {
              g.window_offsets(c, oy, ox, offs);
              __int128 sum = 0;
              for (size_t off : offs) sum += ring.to_signed(x[off]);
              detail::check_magnitude(ring, sum, value_bound, i, "pooling sum");
              __int128 scaled = sum * ring.to_signed(recip);
              detail::check_magnitude(ring, scaled, trunc_bound, i, "pre-scaling");
              y[idx++] = codec.truncate_plain(ring.reduce(static_cast<uint64_t>(scaled)));
            }
        break;
      }
      case LayerKind::GlobalAvgPool: {
        size_t hw = in.h * in.w;
        uint64_t recip = codec.encode(1.0 / static_cast<double>(hw));
        y.resize(in.c);
        for (size_t c = 0; c < in.c; ++c) {
          __int128 sum = 0;
          for (size_t j = 0; j < hw; ++j) sum += ring.to_signed(x[c * hw + j]);
          detail::check_magnitude(ring, sum, value_bound, i, "pooling sum");
          __int128 scaled = sum * ring.to_signed(recip);
          detail::check_magnitude(ring, scaled, trunc_bound, i, "pre-scaling");
          y[c] = codec.truncate_plain(ring.reduce(static_cast<uint64_t>(scaled)));
        }
        break;
      }
      case LayerKind::ResidualAdd: {
        const std::vector<uint64_t>& x2 = value_of(l.input2);
        y.resize(x.size());
        for (size_t j = 0; j < x.size(); ++j) {
          __int128 sum = static_cast<__int128>(ring.to_signed(x[j])) +
                         ring.to_signed(x2[j]);
          detail::check_magnitude(ring, sum, value_bound, i, "residual");
          y[j] = ring.reduce(static_cast<uint64_t>(sum));
        }
        break;
      }
      case LayerKind::BatchNorm:
        throw ShapeError("fixed-point engine needs a folded model");
    }
  }
  return outs.back();
}

inline size_t argmax(const std::vector<double>& v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline size_t argmax_fixed(const Ring& ring, const std::vector<uint64_t>& v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (ring.to_signed(v[i]) > ring.to_signed(v[best])) best = i;
  return best;
}

// ---- model file format ----
// "SINF" | u32 version | u32 text length | architecture text |
// u32 tensor count | per tensor: u16 name length, name, u8 rank,
// u32 dims (little-endian), f64 values (little-endian) | u32 checksum
// over all preceding bytes.

namespace detail {

inline void put_u16_le(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32_le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_f64_le(std::vector<uint8_t>& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
}

struct ByteReader {
  const uint8_t* p;
  size_t n;
  size_t off = 0;
  void need(size_t k) const {
    if (off + k > n) throw FormatError("model file truncated");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[off] | p[off + 1] << 8);
    off += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  double f64() {
    need(8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[off + i]) << (8 * i);
    off += 8;
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + off), k);
    off += k;
    return s;
  }
};

}  // namespace detail

inline std::vector<uint8_t> serialize_model(const ModelSpec& spec, const ModelWeights& w) {
  validate_weights(spec, w);
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'I', 'N', 'F'});
  detail::put_u32_le(out, 1);
  std::string text = canonical_text(spec);
  detail::put_u32_le(out, static_cast<uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  detail::put_u32_le(out, static_cast<uint32_t>(w.t.size()));
  for (const auto& [name, tensor] : w.t) {
    detail::put_u16_le(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<uint8_t>(tensor.shape.size()));
    for (size_t d : tensor.shape) detail::put_u32_le(out, static_cast<uint32_t>(d));
    for (double v : tensor.data) detail::put_f64_le(out, v);
  }
  detail::put_u32_le(out, crc32(out.data(), out.size()));
  return out;
}

inline std::pair<ModelSpec, ModelWeights> parse_model(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "SINF", 4) != 0)
    throw FormatError("not a model file");
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    throw FormatError("model file checksum mismatch");

  detail::ByteReader r{bytes.data(), bytes.size() - 4, 4};
  if (r.u32() != 1) throw FormatError("unsupported model file version");
  uint32_t text_len = r.u32();
  std::string text = r.bytes(text_len);
  ModelSpec spec = parse_arch_text(text);

  ModelWeights w;
  uint32_t n_tensors = r.u32();
  for (uint32_t t = 0; t < n_tensors; ++t) {
    std::string name = r.bytes(r.u16());
    r.need(1);
    uint8_t rank = r.p[r.off++];
    std::vector<size_t> shape(rank);
    for (auto& d : shape) d = r.u32();
    Tensor<double> tensor(shape);
    for (auto& v : tensor.data) v = r.f64();
    w.t[name] = std::move(tensor);
  }
  if (r.off != r.n) throw FormatError("trailing bytes in model file");
  validate_weights(spec, w);
  return {std::move(spec), std::move(w)};
}

inline void write_model(const std::string& path, const ModelSpec& spec,
                        const ModelWeights& w) {
  auto bytes = serialize_model(spec, w);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

inline std::pair<ModelSpec, ModelWeights> read_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return parse_model(bytes);
}

// Stable digest of an architecture plus its weights: the checksum the
// serialized form carries in its tail.
inline uint32_t model_digest(const ModelSpec& spec, const ModelWeights& w) {
  auto bytes = serialize_model(spec, w);
  return crc32(bytes.data(), bytes.size() - 4);
}

}  // namespace sinfer
