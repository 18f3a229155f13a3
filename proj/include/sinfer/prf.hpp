#pragma once

#include <cstdint>
#include <cstring>

#include "sinfer/prng.hpp"

#if !defined(__AES__) || !defined(__SSE4_1__)
#error "this build needs x86-64 AES-NI; compile with -maes -msse4.1"
#endif

#include <immintrin.h>
#include <wmmintrin.h>

namespace sinfer {

namespace detail {

inline __m128i aes_expand_step(__m128i key, __m128i gen) {
  gen = _mm_shuffle_epi32(gen, _MM_SHUFFLE(3, 3, 3, 3));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  key = _mm_xor_si128(key, _mm_slli_si128(key, 4));
  return _mm_xor_si128(key, gen);
}

struct AesRoundKeys {
  __m128i rk[11];
};

inline AesRoundKeys aes128_key_schedule(const uint8_t key[16]) {
  AesRoundKeys ks;
  ks.rk[0] = _mm_loadu_si128(reinterpret_cast<const __m128i*>(key));
  ks.rk[1] = aes_expand_step(ks.rk[0], _mm_aeskeygenassist_si128(ks.rk[0], 0x01));
  ks.rk[2] = aes_expand_step(ks.rk[1], _mm_aeskeygenassist_si128(ks.rk[1], 0x02));
  ks.rk[3] = aes_expand_step(ks.rk[2], _mm_aeskeygenassist_si128(ks.rk[2], 0x04));
  ks.rk[4] = aes_expand_step(ks.rk[3], _mm_aeskeygenassist_si128(ks.rk[3], 0x08));
  ks.rk[5] = aes_expand_step(ks.rk[4], _mm_aeskeygenassist_si128(ks.rk[4], 0x10));
  ks.rk[6] = aes_expand_step(ks.rk[5], _mm_aeskeygenassist_si128(ks.rk[5], 0x20));
  ks.rk[7] = aes_expand_step(ks.rk[6], _mm_aeskeygenassist_si128(ks.rk[6], 0x40));
  ks.rk[8] = aes_expand_step(ks.rk[7], _mm_aeskeygenassist_si128(ks.rk[7], 0x80));
  ks.rk[9] = aes_expand_step(ks.rk[8], _mm_aeskeygenassist_si128(ks.rk[8], 0x1b));
  ks.rk[10] = aes_expand_step(ks.rk[9], _mm_aeskeygenassist_si128(ks.rk[9], 0x36));
  return ks;
}

// Four blocks encrypted in flight under one key schedule; the independent
// aesenc chains pipeline on a single core.
inline void aes128_encrypt4(const AesRoundKeys& ks, __m128i x[4]) {
  for (int i = 0; i < 4; ++i) x[i] = _mm_xor_si128(x[i], ks.rk[0]);
  for (int r = 1; r <= 9; ++r)
    for (int i = 0; i < 4; ++i) x[i] = _mm_aesenc_si128(x[i], ks.rk[r]);
  for (int i = 0; i < 4; ++i) x[i] = _mm_aesenclast_si128(x[i], ks.rk[10]);
}

inline const AesRoundKeys& fixed_round_keys() {
  static const AesRoundKeys ks = [] {
    const uint8_t key[16] = {'s', 'i', 'n', 'f', 'e', 'r', '/', 'p',
                             'r', 'f', '/', 'f', 'i', 'x', 'e', 'd'};
    return aes128_key_schedule(key);
  }();
  return ks;
}

}  // namespace detail

// AES-128 under the fixed key, exposed for the algorithm self-test.
inline void aes128_fixed_encrypt(const uint8_t in[16], uint8_t out[16]) {
  __m128i x[4];
  x[0] = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in));
  x[1] = x[2] = x[3] = x[0];
  detail::aes128_encrypt4(detail::fixed_round_keys(), x);
  _mm_storeu_si128(reinterpret_cast<__m128i*>(out), x[0]);
}

inline void aes128_encrypt_with_key(const uint8_t key[16], const uint8_t in[16],
                                    uint8_t out[16]) {
  detail::AesRoundKeys ks = detail::aes128_key_schedule(key);
  __m128i x[4];
  x[0] = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in));
  x[1] = x[2] = x[3] = x[0];
  detail::aes128_encrypt4(ks, x);
  _mm_storeu_si128(reinterpret_cast<__m128i*>(out), x[0]);
}

// One comparison-tree node expansion: the parent seed is hashed into left and
// right child seeds, left and right value words, and left and right control
// bits.  Each output block is H(s ^ c) = AES_fixed(s ^ c) ^ (s ^ c) with a
// distinct tweak constant c per block (Matyas-Meyer-Oseas).  Control bits are
// the low bit of each child seed's first byte, cleared after extraction.
struct NodeExpansion {
  Seed128 seed[2];
  uint64_t value[2][2];
  uint8_t bit[2];
};

inline void expand_node(const Seed128& s, NodeExpansion& out) {
  __m128i base = _mm_loadu_si128(reinterpret_cast<const __m128i*>(s.data()));
  __m128i x[4];
  __m128i tweaked[4];
  for (int j = 0; j < 4; ++j) {
    tweaked[j] = _mm_xor_si128(base, _mm_set_epi64x(0, j));
    x[j] = tweaked[j];
  }
  detail::aes128_encrypt4(detail::fixed_round_keys(), x);
  for (int j = 0; j < 4; ++j) x[j] = _mm_xor_si128(x[j], tweaked[j]);

  alignas(16) uint8_t block[16];
  for (int side = 0; side < 2; ++side) {
    _mm_store_si128(reinterpret_cast<__m128i*>(block), x[side]);
    out.bit[side] = block[0] & 1;
    block[0] &= 0xfe;
    std::memcpy(out.seed[side].data(), block, 16);
    _mm_store_si128(reinterpret_cast<__m128i*>(block), x[2 + side]);
    std::memcpy(&out.value[side][0], block, 8);
    std::memcpy(&out.value[side][1], block + 8, 8);
  }
}

}  // namespace sinfer
