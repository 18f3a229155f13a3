#pragma once

#include <cstdint>
#include <vector>

#include "sinfer/fss.hpp"
#include "sinfer/prng.hpp"
#include "sinfer/ring.hpp"
#include "sinfer/sharing.hpp"

namespace sinfer {

// Preprocessed material for one sign test: a uniform mask r, an additive
// share of msb(r), a comparison key over the low bits of r with payload
// (1, msb(r)), and a triple for the follow-up bit * value product.  The
// evaluation of the key at the opened masked value yields shares of the
// borrow c = [low(t) < low(r)] and of msb(r)*c, from which a share of
// [value >= 0] is a linear combination selected by the public top bit.
struct CompareUnitShare {
  uint64_t mask = 0;
  uint64_t mask_msb = 0;
  DcfKey borrow;
  ScalarTripleShare mul;
};

// Preprocessed material for one exact scale-down by `divisor`: beyond the
// borrow machinery above, shares of the two wrap-corrected quotients
// A_j = floor((j*2^bits - r) / divisor), two small-domain keys that decide
// the residue carry, and a correlated triple pair (one mask a, two b/c
// pairs) for the wrap-bit products.
struct TruncUnitShare {
  uint64_t mask = 0;
  uint64_t mask_msb = 0;
  DcfKey borrow;
  DcfKey carry[2];
  uint64_t quot[2] = {0, 0};
  uint64_t a = 0;
  uint64_t b_quot = 0, c_quot = 0;
  uint64_t b_carry = 0, c_carry = 0;
};

inline int carry_domain_bits(uint64_t divisor) {
  int bits = 1;
  while ((1ull << bits) <= divisor) ++bits;
  return bits;
}

inline std::pair<CompareUnitShare, CompareUnitShare> gen_compare_unit(
    int word_bits, Prg& rng) {
  Ring ring(word_bits);
  CompareUnitShare u0, u1;
  uint64_t r = ring.reduce(rng.next_u64());
  uint64_t r_low = r & (ring.mask >> 1);
  uint64_t r_msb = r >> (word_bits - 1);

  u0.mask = ring.reduce(rng.next_u64());
  u1.mask = ring.sub(r, u0.mask);
  u0.mask_msb = ring.reduce(rng.next_u64());
  u1.mask_msb = ring.sub(r_msb, u0.mask_msb);

  uint64_t beta[2] = {1, r_msb};
  dcf_gen(word_bits - 1, word_bits, r_low, beta, 2, rng, u0.borrow, u1.borrow);

  uint64_t a = ring.reduce(rng.next_u64());
  uint64_t b = ring.reduce(rng.next_u64());
  uint64_t c = ring.mul(a, b);
  u0.mul.a = ring.reduce(rng.next_u64());
  u1.mul.a = ring.sub(a, u0.mul.a);
  u0.mul.b = ring.reduce(rng.next_u64());
  u1.mul.b = ring.sub(b, u0.mul.b);
  u0.mul.c = ring.reduce(rng.next_u64());
  u1.mul.c = ring.sub(c, u0.mul.c);
  return {std::move(u0), std::move(u1)};
}

inline std::pair<TruncUnitShare, TruncUnitShare> gen_trunc_unit(
    int word_bits, uint64_t divisor, Prg& rng) {
  Ring ring(word_bits);
  TruncUnitShare u0, u1;
  uint64_t r = ring.reduce(rng.next_u64());
  uint64_t r_low = r & (ring.mask >> 1);
  uint64_t r_msb = r >> (word_bits - 1);

  u0.mask = ring.reduce(rng.next_u64());
  u1.mask = ring.sub(r, u0.mask);
  u0.mask_msb = ring.reduce(rng.next_u64());
  u1.mask_msb = ring.sub(r_msb, u0.mask_msb);

  uint64_t beta[2] = {1, r_msb};
  dcf_gen(word_bits - 1, word_bits, r_low, beta, 2, rng, u0.borrow, u1.borrow);

  int cbits = carry_domain_bits(divisor);
  for (int j = 0; j < 2; ++j) {
    __int128 nj = (static_cast<__int128>(j) << word_bits) - static_cast<__int128>(r);
    __int128 aj = nj >= 0 ? nj / static_cast<__int128>(divisor)
                          : -((-nj + static_cast<__int128>(divisor) - 1) /
                              static_cast<__int128>(divisor));
    uint64_t rho = static_cast<uint64_t>(nj - aj * static_cast<__int128>(divisor));
    uint64_t quot = ring.reduce(static_cast<uint64_t>(aj));
    uint64_t one = 1;
    dcf_gen(cbits, word_bits, divisor - rho, &one, 1, rng, u0.carry[j], u1.carry[j]);
    u0.quot[j] = ring.reduce(rng.next_u64());
    u1.quot[j] = ring.sub(quot, u0.quot[j]);
  }

  uint64_t a = ring.reduce(rng.next_u64());
  u0.a = ring.reduce(rng.next_u64());
  u1.a = ring.sub(a, u0.a);
  uint64_t bq = ring.reduce(rng.next_u64());
  uint64_t cq = ring.mul(a, bq);
  u0.b_quot = ring.reduce(rng.next_u64());
  u1.b_quot = ring.sub(bq, u0.b_quot);
  u0.c_quot = ring.reduce(rng.next_u64());
  u1.c_quot = ring.sub(cq, u0.c_quot);
  uint64_t bc = ring.reduce(rng.next_u64());
  uint64_t cc = ring.mul(a, bc);
  u0.b_carry = ring.reduce(rng.next_u64());
  u1.b_carry = ring.sub(bc, u0.b_carry);
  u0.c_carry = ring.reduce(rng.next_u64());
  u1.c_carry = ring.sub(cc, u0.c_carry);
  return {std::move(u0), std::move(u1)};
}

inline std::pair<MatTripleShare, MatTripleShare> gen_mat_triple(
    const Ring& ring, size_t m, size_t k, size_t n, Prg& rng) {
  MatTripleShare t0, t1;
  t0.m = t1.m = m;
  t0.k = t1.k = k;
  t0.n = t1.n = n;
  std::vector<uint64_t> a(m * k), b(k * n);
  for (auto& v : a) v = ring.reduce(rng.next_u64());
  for (auto& v : b) v = ring.reduce(rng.next_u64());
  std::vector<uint64_t> c = mat_mul_mod(ring, a, b, m, k, n);
  auto sa = split_shares(ring, a, rng);
  auto sb = split_shares(ring, b, rng);
  auto sc = split_shares(ring, c, rng);
  t0.a = std::move(sa.first);
  t1.a = std::move(sa.second);
  t0.b = std::move(sb.first);
  t1.b = std::move(sb.second);
  t0.c = std::move(sc.first);
  t1.c = std::move(sc.second);
  return {std::move(t0), std::move(t1)};
}

// Shares of [x >= 0] for each element, consuming units[0..x.size()).
// One opening round.
inline std::vector<uint64_t> signbit_batch(const Ring& ring, int party,
                                           OpenChannel& ch,
                                           const std::vector<uint64_t>& x,
                                           const CompareUnitShare* units) {
  size_t n = x.size();
  std::vector<uint64_t> masked(n);
  for (size_t i = 0; i < n; ++i) masked[i] = ring.add(x[i], units[i].mask);
  std::vector<uint64_t> opened = ch.open(masked);

  std::vector<uint64_t> bits(n);
  uint64_t low_mask = ring.mask >> 1;
  for (size_t i = 0; i < n; ++i) {
    uint64_t t = opened[i];
    uint64_t t_h = t >> (ring.bits - 1);
    uint64_t cg[2];
    dcf_eval(units[i].borrow, t & low_mask, cg);
    uint64_t u = ring.sub(ring.add(units[i].mask_msb, cg[0]),
                          ring.mul(2, cg[1]));
    if (t_h == 1) {
      bits[i] = u;
    } else {
      bits[i] = party == 0 ? ring.sub(1, u) : ring.neg(u);
    }
  }
  return bits;
}

// Secure products value[i] * bit[i] against the triples carried by the same
// compare units; one opening round.
inline std::vector<uint64_t> mul_with_units(const Ring& ring, int party,
                                            OpenChannel& ch,
                                            const std::vector<uint64_t>& x,
                                            const std::vector<uint64_t>& bits,
                                            const CompareUnitShare* units) {
  size_t n = x.size();
  std::vector<ScalarTripleShare> tr(n);
  for (size_t i = 0; i < n; ++i) tr[i] = units[i].mul;
  return mul_elementwise(ring, party, ch, x, bits, tr.data());
}

// max(x) over each listed index group via a pairwise tournament.  Consumes
// one compare unit per comparison; 2*ceil(log2(group size)) opening rounds.
inline std::vector<uint64_t> max_tournament(const Ring& ring, int party,
                                            OpenChannel& ch,
                                            const std::vector<uint64_t>& flat,
                                            const std::vector<std::vector<size_t>>& groups,
                                            const CompareUnitShare* units,
                                            size_t* consumed) {
  std::vector<std::vector<uint64_t>> alive(groups.size());
  size_t width = 0;
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    for (size_t idx : groups[gi]) alive[gi].push_back(flat[idx]);
    width = std::max(width, alive[gi].size());
  }
  size_t used = 0;
  while (width > 1) {
    std::vector<uint64_t> lhs, rhs;
    std::vector<std::pair<size_t, size_t>> where;
    for (size_t gi = 0; gi < alive.size(); ++gi) {
      auto& g = alive[gi];
      for (size_t j = 0; j + 1 < g.size(); j += 2) {
        lhs.push_back(g[j]);
        rhs.push_back(g[j + 1]);
        where.push_back({gi, j});
      }
    }
    if (lhs.empty()) break;
    std::vector<uint64_t> diff(lhs.size());
    for (size_t i = 0; i < lhs.size(); ++i) diff[i] = ring.sub(lhs[i], rhs[i]);
    std::vector<uint64_t> bits = signbit_batch(ring, party, ch, diff, units + used);
    std::vector<uint64_t> picked =
        mul_with_units(ring, party, ch, diff, bits, units + used);
    used += lhs.size();

    std::vector<std::vector<uint64_t>> next(alive.size());
    size_t cursor = 0;
    for (size_t gi = 0; gi < alive.size(); ++gi) {
      auto& g = alive[gi];
      size_t j = 0;
      for (; j + 1 < g.size(); j += 2) {
        next[gi].push_back(ring.add(rhs[cursor], picked[cursor]));
        ++cursor;
      }
      if (j < g.size()) next[gi].push_back(g[j]);
    }
    alive = std::move(next);
    width = 0;
    for (auto& g : alive) width = std::max(width, g.size());
  }
  std::vector<uint64_t> out(groups.size());
  for (size_t gi = 0; gi < groups.size(); ++gi) out[gi] = alive[gi][0];
  if (consumed) *consumed = used;
  return out;
}

// Exact scale-down of each element by `d`, floor semantics, for inputs
// bounded by trunc_offset().  Two opening rounds.
inline std::vector<uint64_t> truncate_batch(const Ring& ring, uint64_t d,
                                            int party, OpenChannel& ch,
                                            const std::vector<uint64_t>& x,
                                            const TruncUnitShare* units) {
  uint64_t offset = trunc_offset(ring, d);
  size_t n = x.size();

  std::vector<uint64_t> masked(n);
  for (size_t i = 0; i < n; ++i) {
    uint64_t v = party == 0 ? ring.add(x[i], offset) : x[i];
    masked[i] = ring.add(v, units[i].mask);
  }
  std::vector<uint64_t> opened = ch.open(masked);

  uint64_t low_mask = ring.mask >> 1;
  std::vector<uint64_t> base(n);
  std::vector<uint64_t> eps_delta(3 * n);

  for (size_t i = 0; i < n; ++i) {
    const TruncUnitShare& u = units[i];
    uint64_t t = opened[i];
    uint64_t q = t / d;
    uint64_t s_res = t % d;
    uint64_t t_h = t >> (ring.bits - 1);

    uint64_t cg[2];
    dcf_eval(u.borrow, t & low_mask, cg);
    uint64_t w = t_h == 0 ? ring.sub(ring.add(u.mask_msb, cg[0]), cg[1]) : cg[1];

    uint64_t e0[1], e1[1];
    dcf_eval(u.carry[0], s_res, e0);
    dcf_eval(u.carry[1], s_res, e1);
    uint64_t c0 = ring.sub(party == 0 ? 1 : 0, e0[0]);
    uint64_t c1 = ring.sub(party == 0 ? 1 : 0, e1[0]);

    uint64_t dq = ring.sub(u.quot[1], u.quot[0]);
    uint64_t dc = ring.sub(c1, c0);

    base[i] = ring.add(u.quot[0], c0);
    if (party == 0)
      base[i] = ring.add(base[i], ring.sub(q, offset / d));

    eps_delta[i] = ring.sub(w, u.a);
    eps_delta[n + i] = ring.sub(dq, u.b_quot);
    eps_delta[2 * n + i] = ring.sub(dc, u.b_carry);
  }
  std::vector<uint64_t> opened2 = ch.open(eps_delta);

  std::vector<uint64_t> out(n);
  for (size_t i = 0; i < n; ++i) {
    const TruncUnitShare& u = units[i];
    uint64_t eps = opened2[i];
    uint64_t del_q = opened2[n + i];
    uint64_t del_c = opened2[2 * n + i];
    uint64_t prod_q = ring.add(u.c_quot, ring.add(ring.mul(eps, u.b_quot),
                                                  ring.mul(u.a, del_q)));
    uint64_t prod_c = ring.add(u.c_carry, ring.add(ring.mul(eps, u.b_carry),
                                                   ring.mul(u.a, del_c)));
    if (party == 0) {
      prod_q = ring.add(prod_q, ring.mul(eps, del_q));
      prod_c = ring.add(prod_c, ring.mul(eps, del_c));
    }
    out[i] = ring.add(base[i], ring.add(prod_q, prod_c));
  }
  return out;
}

// Rectifier: x * [x >= 0], two opening rounds.
inline std::vector<uint64_t> relu_batch(const Ring& ring, int party,
                                        OpenChannel& ch,
                                        const std::vector<uint64_t>& x,
                                        const CompareUnitShare* units) {
  std::vector<uint64_t> bits = signbit_batch(ring, party, ch, x, units);
  return mul_with_units(ring, party, ch, x, bits, units);
}

}  // namespace sinfer
