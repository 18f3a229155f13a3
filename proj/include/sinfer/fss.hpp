#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "sinfer/errors.hpp"
#include "sinfer/prf.hpp"
#include "sinfer/prng.hpp"
#include "sinfer/ring.hpp"

namespace sinfer {

// Key share of a two-party comparison function.  The two evaluations add up
// to beta * [x < alpha] in Z_2^word_bits, component-wise for payloads of one
// or two ring words.  Inputs are domain_bits wide, consumed MSB first.
struct DcfKey {
  uint8_t party = 0;
  uint8_t domain_bits = 0;
  uint8_t word_bits = 0;
  uint8_t components = 1;
  Seed128 root{};

  struct LevelCw {
    Seed128 seed{};
    uint64_t value[2] = {0, 0};
    uint8_t t_left = 0;
    uint8_t t_right = 0;
  };
  std::vector<LevelCw> levels;
  uint64_t final_cw[2] = {0, 0};

  size_t serialized_size() const {
    return 5 + 16 + levels.size() * (16 + 8 * components + 1) + 8 * components;
  }
};

namespace detail {

inline void put_u64_le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint64_t get_u64_le(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

inline void xor_seed(Seed128& a, const Seed128& b) {
  for (int i = 0; i < 16; ++i) a[i] ^= b[i];
}

// First `comps` little-endian words of a seed, used for the leaf correction.
inline void convert_seed(const Seed128& s, int comps, uint64_t out[2]) {
  out[0] = get_u64_le(s.data());
  out[1] = comps > 1 ? get_u64_le(s.data() + 8) : 0;
}

}  // namespace detail

// Generates the two key shares for alpha and payload beta.  Seeds come from
// `rng`; generation touches nothing but alpha, beta, and that randomness.
inline void dcf_gen(int domain_bits, int word_bits, uint64_t alpha,
                    const uint64_t* beta, int components, Prg& rng, DcfKey& k0,
                    DcfKey& k1) {
  if (domain_bits < 1 || domain_bits > 64) throw FormatError("bad comparison domain");
  if (components < 1 || components > 2) throw FormatError("bad payload arity");
  Ring ring(word_bits);

  for (DcfKey* k : {&k0, &k1}) {
    k->domain_bits = static_cast<uint8_t>(domain_bits);
    k->word_bits = static_cast<uint8_t>(word_bits);
    k->components = static_cast<uint8_t>(components);
    k->levels.assign(domain_bits, {});
    k->final_cw[0] = k->final_cw[1] = 0;
  }
  k0.party = 0;
  k1.party = 1;
  k0.root = rng.next_seed();
  k1.root = rng.next_seed();

  Seed128 s0 = k0.root, s1 = k1.root;
  uint8_t t0 = 0, t1 = 1;
  uint64_t v_alpha[2] = {0, 0};

  for (int i = 0; i < domain_bits; ++i) {
    NodeExpansion e0, e1;
    expand_node(s0, e0);
    expand_node(s1, e1);
    int bit = static_cast<int>(alpha >> (domain_bits - 1 - i)) & 1;
    int keep = bit, lose = 1 - bit;

    DcfKey::LevelCw cw;
    cw.seed = e0.seed[lose];
    detail::xor_seed(cw.seed, e1.seed[lose]);

    for (int c = 0; c < components; ++c) {
      uint64_t d = ring.sub(ring.sub(e1.value[lose][c], e0.value[lose][c]), v_alpha[c]);
      if (lose == 0) d = ring.add(d, beta[c]);
      if (t1) d = ring.neg(d);
      cw.value[c] = d;
      uint64_t step = ring.add(ring.sub(e0.value[keep][c], e1.value[keep][c]),
                               t1 ? ring.neg(cw.value[c]) : cw.value[c]);
      v_alpha[c] = ring.add(v_alpha[c], step);
    }

    cw.t_left = e0.bit[0] ^ e1.bit[0] ^ static_cast<uint8_t>(bit) ^ 1;
    cw.t_right = e0.bit[1] ^ e1.bit[1] ^ static_cast<uint8_t>(bit);
    k0.levels[i] = cw;
    k1.levels[i] = cw;

    uint8_t tcw_keep = keep == 0 ? cw.t_left : cw.t_right;
    Seed128 next0 = e0.seed[keep];
    if (t0) detail::xor_seed(next0, cw.seed);
    uint8_t nt0 = e0.bit[keep] ^ (t0 & tcw_keep);
    Seed128 next1 = e1.seed[keep];
    if (t1) detail::xor_seed(next1, cw.seed);
    uint8_t nt1 = e1.bit[keep] ^ (t1 & tcw_keep);
    s0 = next0;
    t0 = nt0;
    s1 = next1;
    t1 = nt1;
  }

  uint64_t c0[2], c1[2];
  detail::convert_seed(s0, components, c0);
  detail::convert_seed(s1, components, c1);
  for (int c = 0; c < components; ++c) {
    uint64_t d = ring.sub(ring.sub(c1[c], c0[c]), v_alpha[c]);
    if (t1) d = ring.neg(d);
    k0.final_cw[c] = d;
    k1.final_cw[c] = d;
  }
}

// Evaluates one key share at x; writes `components` ring words.
inline void dcf_eval(const DcfKey& k, uint64_t x, uint64_t* out) {
  Ring ring(k.word_bits);
  int comps = k.components;
  Seed128 s = k.root;
  uint8_t t = k.party;
  uint64_t v[2] = {0, 0};

  for (int i = 0; i < k.domain_bits; ++i) {
    const auto& cw = k.levels[i];
    NodeExpansion e;
    expand_node(s, e);
    int dir = static_cast<int>(x >> (k.domain_bits - 1 - i)) & 1;
    for (int c = 0; c < comps; ++c) {
      uint64_t add = e.value[dir][c];
      if (t) add = ring.add(add, cw.value[c]);
      v[c] = ring.add(v[c], k.party ? ring.neg(add) : add);
    }
    Seed128 next = e.seed[dir];
    uint8_t nt = e.bit[dir];
    if (t) {
      detail::xor_seed(next, cw.seed);
      nt ^= dir == 0 ? cw.t_left : cw.t_right;
    }
    s = next;
    t = nt;
  }

  uint64_t leaf[2];
  detail::convert_seed(s, comps, leaf);
  for (int c = 0; c < comps; ++c) {
    uint64_t add = leaf[c];
    if (t) add = ring.add(add, k.final_cw[c]);
    out[c] = ring.add(v[c], k.party ? ring.neg(add) : add);
    out[c] = ring.reduce(out[c]);
  }
}

// Key wire format: 5-byte header (party, domain bits, word bits, payload
// arity, format version), root seed, then level-ordered correction words
// (seed, little-endian value words, packed control bits), then the leaf
// correction words.
inline void serialize_dcf(const DcfKey& k, std::vector<uint8_t>& out) {
  out.push_back(1);
  out.push_back(k.party);
  out.push_back(k.domain_bits);
  out.push_back(k.word_bits);
  out.push_back(k.components);
  out.insert(out.end(), k.root.begin(), k.root.end());
  for (const auto& cw : k.levels) {
    out.insert(out.end(), cw.seed.begin(), cw.seed.end());
    for (int c = 0; c < k.components; ++c) detail::put_u64_le(out, cw.value[c]);
    out.push_back(static_cast<uint8_t>(cw.t_left | cw.t_right << 1));
  }
  for (int c = 0; c < k.components; ++c) detail::put_u64_le(out, k.final_cw[c]);
}

inline size_t parse_dcf(const uint8_t* p, size_t n, DcfKey& k) {
  if (n < 21) throw FormatError("comparison key truncated");
  if (p[0] != 1) throw FormatError("unknown comparison key version");
  k.party = p[1];
  k.domain_bits = p[2];
  k.word_bits = p[3];
  k.components = p[4];
  if (k.party > 1 || k.domain_bits < 1 || k.domain_bits > 64 ||
      (k.word_bits != 32 && k.word_bits != 64 && k.word_bits > 64) ||
      k.word_bits < 1 || (k.components != 1 && k.components != 2))
    throw FormatError("bad comparison key header");
  std::memcpy(k.root.data(), p + 5, 16);
  size_t off = 21;
  size_t per_level = 16 + 8 * static_cast<size_t>(k.components) + 1;
  size_t need = off + k.domain_bits * per_level + 8 * k.components;
  if (n < need) throw FormatError("comparison key truncated");
  k.levels.assign(k.domain_bits, {});
  for (int i = 0; i < k.domain_bits; ++i) {
    auto& cw = k.levels[i];
    std::memcpy(cw.seed.data(), p + off, 16);
    off += 16;
    for (int c = 0; c < k.components; ++c) {
      cw.value[c] = detail::get_u64_le(p + off);
      off += 8;
    }
    cw.t_left = p[off] & 1;
    cw.t_right = (p[off] >> 1) & 1;
    ++off;
  }
  k.final_cw[0] = k.final_cw[1] = 0;
  for (int c = 0; c < k.components; ++c) {
    k.final_cw[c] = detail::get_u64_le(p + off);
    off += 8;
  }
  return off;
}

}  // namespace sinfer
