#pragma once

#include <cstdint>
#include <vector>

#include "sinfer/dealer.hpp"
#include "sinfer/gadgets.hpp"
#include "sinfer/model.hpp"
#include "sinfer/sharing.hpp"

namespace sinfer {

// Splits every encoded weight tensor into an additive share pair.
inline std::pair<QuantizedModel, QuantizedModel> split_model_shares(
    const QuantizedModel& q, Prg& rng) {
  Ring ring(q.word_bits);
  QuantizedModel s0, s1;
  s0.word_bits = s1.word_bits = q.word_bits;
  s0.precision = s1.precision = q.precision;
  for (const auto& [name, values] : q.t) {
    auto pair = split_shares(ring, values, rng);
    s0.t[name] = std::move(pair.first);
    s1.t[name] = std::move(pair.second);
  }
  return {std::move(s0), std::move(s1)};
}

// Two-party evaluation of a folded model over additive shares.  Both the
// activations and the weights stay shared throughout; the dealer material
// must have been generated against plan_preprocessing() of the same spec
// and encoding.  The output is this party's share of the logits, and the
// data flow matches infer_fixed() word for word.
inline std::vector<uint64_t> secure_infer(const ModelSpec& spec, const FixedCodec& codec,
                                          int party, OpenChannel& ch,
                                          const QuantizedModel& wshare,
                                          const std::vector<LayerMaterial>& material,
                                          const std::vector<uint64_t>& xshare) {
  const Ring& ring = codec.ring;
  std::vector<DataShape> shapes = validate_spec(spec);
  if (material.size() != spec.layers.size())
    throw ProtocolError("material does not cover every layer");
  if (xshare.size() != spec.in_c * spec.in_h * spec.in_w)
    throw ShapeError("input length does not match the model input");

  std::vector<std::vector<uint64_t>> outs(spec.layers.size());
  auto value_of = [&](int ref) -> const std::vector<uint64_t>& {
    return ref == -1 ? xshare : outs[ref];
  };

  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const LayerMaterial& mat = material[i];
    DataShape in = detail::input_shape_of(spec, shapes, l.input, i);
    const std::vector<uint64_t>& x = value_of(l.input);
    std::vector<uint64_t>& y = outs[i];
    size_t trunc_used = 0, compare_used = 0;

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
        const std::vector<uint64_t>& weight = wshare.t.at(tensor_name(i, "weight"));
        const std::vector<uint64_t>& bias = wshare.t.at(tensor_name(i, "bias"));
        const uint64_t* px = dense ? x.data() : patches.data.data();

        std::vector<uint64_t> lhs(px, px + m * kk);
        std::vector<uint64_t> rhs(kk * n);
        for (size_t c = 0; c < kk; ++c)
          for (size_t o = 0; o < n; ++o) rhs[c * n + o] = weight[o * kk + c];

        std::vector<uint64_t> prod = beaver_matmul(ring, party, ch, lhs, rhs, mat.triple);
        if (mat.trunc.size() < m * n)
          throw ProtocolError("scale-down material exhausted at layer " + std::to_string(i));
        std::vector<uint64_t> trunc =
            truncate_batch(ring, codec.scale, party, ch, prod, mat.trunc.data());
        trunc_used = m * n;

        y.assign(m * n, 0);
        for (size_t r = 0; r < m; ++r)
          for (size_t o = 0; o < n; ++o)
            y[dense ? o : o * m + r] = ring.add(trunc[r * n + o], bias[o]);
        break;
      }
      case LayerKind::Relu:
        if (mat.compare.size() < x.size())
          throw ProtocolError("comparison material exhausted at layer " + std::to_string(i));
        y = relu_batch(ring, party, ch, x, mat.compare.data());
        compare_used = x.size();
        break;
      case LayerKind::Identity:
        y = x;
        break;
      case LayerKind::MaxPool: {
        PoolGeom g = pool_geom(l, in);
        std::vector<std::vector<size_t>> groups;
        groups.reserve(g.windows());
        std::vector<size_t> offs;
        size_t needed = 0;
        for (size_t c = 0; c < g.channels; ++c)
          for (size_t oy = 0; oy < g.out_h(); ++oy)
            for (size_t ox = 0; ox < g.out_w(); ++ox) {
              g.window_offsets(c, oy, ox, offs);
              needed += offs.size() - 1;
              groups.push_back(offs);
            }
        if (mat.compare.size() < needed)
          throw ProtocolError("comparison material exhausted at layer " + std::to_string(i));
        y = max_tournament(ring, party, ch, x, groups, mat.compare.data(), &compare_used);
        break;
      }
      case LayerKind::AvgPool: {
        PoolGeom g = pool_geom(l, in);
        uint64_t recip = codec.encode(1.0 / static_cast<double>(l.k * l.k));
        std::vector<uint64_t> scaled(g.windows());
        std::vector<size_t> offs;
        size_t idx = 0;
        for (size_t c = 0; c < g.channels; ++c)
          for (size_t oy = 0; oy < g.out_h(); ++oy)
            for (size_t ox = 0; ox < g.out_w(); ++ox) {
              g.window_offsets(c, oy, ox, offs);
              uint64_t sum = 0;
              for (size_t off : offs) sum = ring.add(sum, x[off]);
              scaled[idx++] = ring.mul(sum, recip);
            }
        if (mat.trunc.size() < scaled.size())
          throw ProtocolError("scale-down material exhausted at layer " + std::to_string(i));
        y = truncate_batch(ring, codec.scale, party, ch, scaled, mat.trunc.data());
        trunc_used = scaled.size();
        break;
      }
      case LayerKind::GlobalAvgPool: {
        size_t hw = in.h * in.w;
        uint64_t recip = codec.encode(1.0 / static_cast<double>(hw));
        std::vector<uint64_t> scaled(in.c);
        for (size_t c = 0; c < in.c; ++c) {
          uint64_t sum = 0;
          for (size_t j = 0; j < hw; ++j) sum = ring.add(sum, x[c * hw + j]);
          scaled[c] = ring.mul(sum, recip);
        }
        if (mat.trunc.size() < scaled.size())
          throw ProtocolError("scale-down material exhausted at layer " + std::to_string(i));
        y = truncate_batch(ring, codec.scale, party, ch, scaled, mat.trunc.data());
        trunc_used = scaled.size();
        break;
      }
      case LayerKind::ResidualAdd: {
        const std::vector<uint64_t>& x2 = value_of(l.input2);
        y.resize(x.size());
        for (size_t j = 0; j < x.size(); ++j) y[j] = ring.add(x[j], x2[j]);
        break;
      }
      case LayerKind::BatchNorm:
        throw ProtocolError("secure evaluation needs a folded model");
    }

    if (trunc_used != mat.trunc.size() || compare_used != mat.compare.size())
      throw ProtocolError("material for layer " + std::to_string(i) +
                          " does not match its demand");
  }
  return outs.back();
}

}  // namespace sinfer
