#pragma once

#include <cstdint>
#include <vector>

#include "sinfer/gadgets.hpp"
#include "sinfer/model.hpp"
#include "sinfer/prng.hpp"

namespace sinfer {

// Material demands of a single layer, fully determined by the architecture
// and the encoding; never by inputs or weights.
struct LayerMaterialCounts {
  size_t m = 0, k = 0, n = 0;
  size_t trunc_units = 0;
  uint64_t trunc_divisor = 0;
  size_t compare_units = 0;

  bool has_triple() const { return m != 0; }
  size_t triple_words() const { return m * k + k * n + m * n; }
  bool operator==(const LayerMaterialCounts&) const = default;
};

struct PreprocessingPlan {
  int word_bits = 64;
  int precision = 4;
  std::vector<LayerMaterialCounts> layers;

  size_t total_triple_words() const {
    size_t s = 0;
    for (const auto& l : layers) s += l.triple_words();
    return s;
  }
  size_t total_trunc_units() const {
    size_t s = 0;
    for (const auto& l : layers) s += l.trunc_units;
    return s;
  }
  size_t total_compare_units() const {
    size_t s = 0;
    for (const auto& l : layers) s += l.compare_units;
    return s;
  }
  bool operator==(const PreprocessingPlan&) const = default;
};

inline PreprocessingPlan plan_preprocessing(const ModelSpec& spec, int word_bits,
                                            int precision) {
  FixedCodec codec(word_bits, precision);
  std::vector<DataShape> shapes = validate_spec(spec);
  PreprocessingPlan plan;
  plan.word_bits = word_bits;
  plan.precision = precision;

  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    DataShape in = detail::input_shape_of(spec, shapes, l.input, i);
    LayerMaterialCounts c;
    switch (l.kind) {
      case LayerKind::Conv: {
        ConvGeom g = conv_geom(l, in);
        c.m = g.rows();
        c.k = g.cols();
        c.n = g.c_out;
        c.trunc_units = c.m * c.n;
        c.trunc_divisor = codec.scale;
        break;
      }
      case LayerKind::Dense:
        c.m = 1;
        c.k = in.len();
        c.n = l.units;
        c.trunc_units = l.units;
        c.trunc_divisor = codec.scale;
        break;
      case LayerKind::Relu:
        c.compare_units = in.len();
        break;
      case LayerKind::MaxPool: {
        PoolGeom g = pool_geom(l, in);
        std::vector<size_t> offs;
        for (size_t ch = 0; ch < g.channels; ++ch)
          for (size_t oy = 0; oy < g.out_h(); ++oy)
            for (size_t ox = 0; ox < g.out_w(); ++ox) {
              g.window_offsets(ch, oy, ox, offs);
              c.compare_units += offs.size() - 1;
            }
        break;
      }
      case LayerKind::AvgPool: {
        PoolGeom g = pool_geom(l, in);
        c.trunc_units = g.windows();
        c.trunc_divisor = codec.scale;
        break;
      }
      case LayerKind::GlobalAvgPool:
        c.trunc_units = in.c;
        c.trunc_divisor = codec.scale;
        break;
      case LayerKind::ResidualAdd:
      case LayerKind::Identity:
        break;
      case LayerKind::BatchNorm:
        throw ShapeError("preprocessing plan needs a folded model");
    }
    plan.layers.push_back(c);
  }
  return plan;
}

// One party's preprocessed material for one layer.
struct LayerMaterial {
  MatTripleShare triple;
  std::vector<TruncUnitShare> trunc;
  std::vector<CompareUnitShare> compare;
};

inline std::pair<LayerMaterial, LayerMaterial> generate_layer_material(
    const LayerMaterialCounts& counts, int word_bits, Seed128 layer_seed) {
  Ring ring(word_bits);
  Prg rng = Prg::from_seed(layer_seed, 0);
  LayerMaterial m0, m1;
  if (counts.has_triple()) {
    auto t = gen_mat_triple(ring, counts.m, counts.k, counts.n, rng);
    m0.triple = std::move(t.first);
    m1.triple = std::move(t.second);
  }
  m0.trunc.reserve(counts.trunc_units);
  m1.trunc.reserve(counts.trunc_units);
  for (size_t i = 0; i < counts.trunc_units; ++i) {
    auto u = gen_trunc_unit(word_bits, counts.trunc_divisor, rng);
    m0.trunc.push_back(std::move(u.first));
    m1.trunc.push_back(std::move(u.second));
  }
  m0.compare.reserve(counts.compare_units);
  m1.compare.reserve(counts.compare_units);
  for (size_t i = 0; i < counts.compare_units; ++i) {
    auto u = gen_compare_unit(word_bits, rng);
    m0.compare.push_back(std::move(u.first));
    m1.compare.push_back(std::move(u.second));
  }
  return {std::move(m0), std::move(m1)};
}

inline std::pair<std::vector<LayerMaterial>, std::vector<LayerMaterial>>
generate_material(const PreprocessingPlan& plan, Seed128 session_seed) {
  std::vector<LayerMaterial> p0, p1;
  for (size_t i = 0; i < plan.layers.size(); ++i) {
    Seed128 layer_seed = derive_seed(session_seed, i);
    auto pair = generate_layer_material(plan.layers[i], plan.word_bits, layer_seed);
    p0.push_back(std::move(pair.first));
    p1.push_back(std::move(pair.second));
  }
  return {std::move(p0), std::move(p1)};
}

// ---- serialization ----

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct MaterialReader {
  const uint8_t* p;
  size_t n;
  size_t off = 0;
  void need(size_t k) const {
    if (off + k > n) throw FormatError("material chunk truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[off + i]) << (8 * i);
    off += 8;
    return v;
  }
  DcfKey key() {
    DcfKey k;
    size_t used = parse_dcf(p + off, n - off, k);
    off += used;
    return k;
  }
};

}  // namespace detail

inline void serialize_layer_material(const LayerMaterial& m, std::vector<uint8_t>& out) {
  out.push_back(m.triple.m != 0 ? 1 : 0);
  if (m.triple.m != 0) {
    detail::put_u32(out, static_cast<uint32_t>(m.triple.m));
    detail::put_u32(out, static_cast<uint32_t>(m.triple.k));
    detail::put_u32(out, static_cast<uint32_t>(m.triple.n));
    for (const auto* vec : {&m.triple.a, &m.triple.b, &m.triple.c})
      for (uint64_t v : *vec) detail::put_u64(out, v);
  }
  detail::put_u32(out, static_cast<uint32_t>(m.trunc.size()));
  for (const TruncUnitShare& u : m.trunc) {
    detail::put_u64(out, u.mask);
    detail::put_u64(out, u.mask_msb);
    serialize_dcf(u.borrow, out);
    serialize_dcf(u.carry[0], out);
    serialize_dcf(u.carry[1], out);
    detail::put_u64(out, u.quot[0]);
    detail::put_u64(out, u.quot[1]);
    detail::put_u64(out, u.a);
    detail::put_u64(out, u.b_quot);
    detail::put_u64(out, u.c_quot);
    detail::put_u64(out, u.b_carry);
    detail::put_u64(out, u.c_carry);
  }
  detail::put_u32(out, static_cast<uint32_t>(m.compare.size()));
  for (const CompareUnitShare& u : m.compare) {
    detail::put_u64(out, u.mask);
    detail::put_u64(out, u.mask_msb);
    serialize_dcf(u.borrow, out);
    detail::put_u64(out, u.mul.a);
    detail::put_u64(out, u.mul.b);
    detail::put_u64(out, u.mul.c);
  }
}

inline LayerMaterial parse_layer_material(const uint8_t* p, size_t n, size_t* consumed) {
  detail::MaterialReader r{p, n};
  LayerMaterial m;
  r.need(1);
  bool has_triple = p[r.off++] != 0;
  if (has_triple) {
    m.triple.m = r.u32();
    m.triple.k = r.u32();
    m.triple.n = r.u32();
    size_t mk = m.triple.m * m.triple.k;
    size_t kn = m.triple.k * m.triple.n;
    size_t mn = m.triple.m * m.triple.n;
    if (mk == 0 || kn == 0)
      throw FormatError("material chunk carries an empty matrix triple");
    m.triple.a.resize(mk);
    m.triple.b.resize(kn);
    m.triple.c.resize(mn);
    for (auto* vec : {&m.triple.a, &m.triple.b, &m.triple.c})
      for (auto& v : *vec) v = r.u64();
  }
  uint32_t n_trunc = r.u32();
  m.trunc.resize(n_trunc);
  for (TruncUnitShare& u : m.trunc) {
    u.mask = r.u64();
    u.mask_msb = r.u64();
    u.borrow = r.key();
    u.carry[0] = r.key();
    u.carry[1] = r.key();
    u.quot[0] = r.u64();
    u.quot[1] = r.u64();
    u.a = r.u64();
    u.b_quot = r.u64();
    u.c_quot = r.u64();
    u.b_carry = r.u64();
    u.c_carry = r.u64();
  }
  uint32_t n_compare = r.u32();
  m.compare.resize(n_compare);
  for (CompareUnitShare& u : m.compare) {
    u.mask = r.u64();
    u.mask_msb = r.u64();
    u.borrow = r.key();
    u.mul.a = r.u64();
    u.mul.b = r.u64();
    u.mul.c = r.u64();
  }
  if (consumed) *consumed = r.off;
  return m;
}

// ---- plan serialization ----

inline std::vector<uint8_t> plan_to_bytes(const PreprocessingPlan& plan) {
  std::vector<uint8_t> out;
  out.push_back(static_cast<uint8_t>(plan.word_bits));
  out.push_back(static_cast<uint8_t>(plan.precision));
  detail::put_u32(out, static_cast<uint32_t>(plan.layers.size()));
  for (const LayerMaterialCounts& c : plan.layers) {
    detail::put_u32(out, static_cast<uint32_t>(c.m));
    detail::put_u32(out, static_cast<uint32_t>(c.k));
    detail::put_u32(out, static_cast<uint32_t>(c.n));
    detail::put_u32(out, static_cast<uint32_t>(c.trunc_units));
    detail::put_u64(out, c.trunc_divisor);
    detail::put_u32(out, static_cast<uint32_t>(c.compare_units));
  }
  return out;
}

inline PreprocessingPlan plan_from_bytes(const uint8_t* p, size_t n) {
  detail::MaterialReader r{p, n};
  r.need(2);
  PreprocessingPlan plan;
  plan.word_bits = p[r.off++];
  plan.precision = p[r.off++];
  uint32_t count = r.u32();
  plan.layers.resize(count);
  for (LayerMaterialCounts& c : plan.layers) {
    c.m = r.u32();
    c.k = r.u32();
    c.n = r.u32();
    c.trunc_units = r.u32();
    c.trunc_divisor = r.u64();
    c.compare_units = r.u32();
  }
  if (r.off != n) throw FormatError("trailing bytes in plan");
  if (plan.word_bits != 32 && plan.word_bits != 64)
    throw FormatError("plan word size must be 32 or 64");
  return plan;
}

}  // namespace sinfer
