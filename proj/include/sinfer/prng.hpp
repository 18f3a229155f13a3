#pragma once

#include <array>
#include <cstdint>
#include <cstring>

namespace sinfer {

using Seed128 = std::array<uint8_t, 16>;

namespace detail {

inline uint32_t rotl32(uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

inline void chacha_quarter(uint32_t& a, uint32_t& b, uint32_t& c, uint32_t& d) {
  a += b; d ^= a; d = rotl32(d, 16);
  c += d; b ^= c; b = rotl32(b, 12);
  a += b; d ^= a; d = rotl32(d, 8);
  c += d; b ^= c; b = rotl32(b, 7);
}

inline void stretch_key(const Seed128& seed, uint8_t key32[32]) {
  std::memcpy(key32, seed.data(), 16);
  std::memcpy(key32 + 16, seed.data(), 16);
  for (int i = 0; i < 16; ++i) key32[16 + i] ^= 0x5c;
}

}  // namespace detail

// ChaCha block function, RFC 8439 state layout.  `rounds` must be even;
// 20 reproduces the RFC test vectors, the stream generator below runs 12.
inline void chacha_block(const uint32_t key[8], uint32_t counter,
                         const uint32_t nonce[3], int rounds, uint8_t out[64]) {
  uint32_t s[16] = {0x61707865, 0x3320646e, 0x79622d32, 0x6b206574,
                    key[0], key[1], key[2], key[3],
                    key[4], key[5], key[6], key[7],
                    counter, nonce[0], nonce[1], nonce[2]};
  uint32_t x[16];
  std::memcpy(x, s, sizeof(x));
  for (int r = 0; r < rounds; r += 2) {
    detail::chacha_quarter(x[0], x[4], x[8], x[12]);
    detail::chacha_quarter(x[1], x[5], x[9], x[13]);
    detail::chacha_quarter(x[2], x[6], x[10], x[14]);
    detail::chacha_quarter(x[3], x[7], x[11], x[15]);
    detail::chacha_quarter(x[0], x[5], x[10], x[15]);
    detail::chacha_quarter(x[1], x[6], x[11], x[12]);
    detail::chacha_quarter(x[2], x[7], x[8], x[13]);
    detail::chacha_quarter(x[3], x[4], x[9], x[14]);
  }
  for (int i = 0; i < 16; ++i) {
    uint32_t w = x[i] + s[i];
    out[4 * i + 0] = static_cast<uint8_t>(w);
    out[4 * i + 1] = static_cast<uint8_t>(w >> 8);
    out[4 * i + 2] = static_cast<uint8_t>(w >> 16);
    out[4 * i + 3] = static_cast<uint8_t>(w >> 24);
  }
}

// Deterministic ChaCha12 byte stream.  Streams are identified by a 32-byte
// key plus a 96-bit nonce; helpers derive both from a 128-bit seed and a
// stream label so independent streams never share (key, nonce).
class Prg {
 public:
  Prg(const uint8_t key32[32], uint64_t stream_hi, uint32_t stream_lo) {
    for (int i = 0; i < 8; ++i) {
      key_[i] = static_cast<uint32_t>(key32[4 * i]) |
                static_cast<uint32_t>(key32[4 * i + 1]) << 8 |
                static_cast<uint32_t>(key32[4 * i + 2]) << 16 |
                static_cast<uint32_t>(key32[4 * i + 3]) << 24;
    }
    nonce_[0] = static_cast<uint32_t>(stream_hi);
    nonce_[1] = static_cast<uint32_t>(stream_hi >> 32);
    nonce_[2] = stream_lo;
  }

  static Prg from_seed(const Seed128& seed, uint64_t stream) {
    uint8_t key[32];
    detail::stretch_key(seed, key);
    return Prg(key, stream, 0);
  }

  void fill(void* dst, size_t n) {
    auto* p = static_cast<uint8_t*>(dst);
    while (n > 0) {
      if (pos_ == 64) refill();
      size_t take = 64 - pos_;
      if (take > n) take = n;
      std::memcpy(p, buf_ + pos_, take);
      pos_ += take;
      p += take;
      n -= take;
    }
  }

  uint64_t next_u64() {
    uint64_t v;
    fill(&v, 8);
    return v;
  }

  uint32_t next_u32() {
    uint32_t v;
    fill(&v, 4);
    return v;
  }

  Seed128 next_seed() {
    Seed128 s;
    fill(s.data(), 16);
    return s;
  }

  // Uniform double in [lo, hi) from 53 random bits.
  double next_double(double lo, double hi) {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

 private:
  void refill() {
    chacha_block(key_, counter_++, nonce_, 12, buf_);
    pos_ = 0;
  }

  uint32_t key_[8];
  uint32_t nonce_[3];
  uint32_t counter_ = 0;
  uint8_t buf_[64];
  size_t pos_ = 64;
};

// Expands a parent seed into a child seed for the given labels.  Used for
// per-session, per-layer, per-unit dealer randomness so material generation
// is reproducible.  Distinct (label0, label1) pairs select distinct streams.
inline Seed128 derive_seed(const Seed128& parent, uint64_t label0,
                           uint32_t label1 = 0) {
  uint8_t key[32];
  detail::stretch_key(parent, key);
  Prg g(key, label0, label1);
  return g.next_seed();
}

inline Seed128 seed_from_u64(uint64_t v) {
  Seed128 s{};
  for (int i = 0; i < 8; ++i) s[i] = static_cast<uint8_t>(v >> (8 * i));
  return derive_seed(s, 0x73656564);
}

}  // namespace sinfer
