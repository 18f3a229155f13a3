#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sinfer/errors.hpp"

namespace sinfer {

// A frame on the wire is a 4-byte big-endian length, one type byte, and
// the payload; the length counts the type byte plus the payload.  Frame
// lengths are capped well above any message this protocol produces.
inline constexpr size_t kMaxFrameLen = 1u << 30;

enum class MsgType : uint8_t {
  Hello = 1,
  ConfigAck = 2,
  PlanRequest = 3,
  PlanReply = 4,
  MaterialChunk = 5,
  InputShare = 6,
  WeightShareCommit = 7,
  OpenBroadcast = 8,
  LogitsShare = 9,
  Abort = 10,
};

enum class AbortCode : uint16_t {
  ConfigMismatch = 1,
  QuotaExceeded = 2,
  DealerUnavailable = 3,
  PlanMismatch = 4,
  Malformed = 5,
  Overflow = 6,
  Internal = 7,
};

inline const char* abort_code_name(AbortCode c) {
  switch (c) {
    case AbortCode::ConfigMismatch: return "ConfigMismatch";
    case AbortCode::QuotaExceeded: return "QuotaExceeded";
    case AbortCode::DealerUnavailable: return "DealerUnavailable";
    case AbortCode::PlanMismatch: return "PlanMismatch";
    case AbortCode::Malformed: return "Malformed";
    case AbortCode::Overflow: return "Overflow";
    case AbortCode::Internal: return "Internal";
  }
  return "Unknown";
}

struct Frame {
  MsgType type = MsgType::Abort;
  std::vector<uint8_t> payload;
};

namespace wire {

inline void put_u16_be(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_word_le(std::vector<uint8_t>& out, uint64_t v, int word_bits) {
  for (int i = 0; i < word_bits / 8; ++i)
    out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
  const uint8_t* p = nullptr;
  size_t n = 0;
  size_t off = 0;

  void need(size_t k) const {
    if (off + k > n) throw FrameError("message payload truncated");
  }
  uint8_t u8() {
    need(1);
    return p[off++];
  }
  uint16_t u16_be() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[off] << 8 | p[off + 1]);
    off += 2;
    return v;
  }
  uint32_t u32_be() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | p[off + i];
    off += 4;
    return v;
  }
  uint64_t word_le(int word_bits) {
    size_t k = static_cast<size_t>(word_bits) / 8;
    need(k);
    uint64_t v = 0;
    for (size_t i = 0; i < k; ++i) v |= static_cast<uint64_t>(p[off + i]) << (8 * i);
    off += k;
    return v;
  }
  std::string str(size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + off), k);
    off += k;
    return s;
  }
  std::vector<uint8_t> bytes(size_t k) {
    need(k);
    std::vector<uint8_t> b(p + off, p + off + k);
    off += k;
    return b;
  }
  void done() const {
    if (off != n) throw FrameError("trailing bytes in message payload");
  }
};

}  // namespace wire

inline std::vector<uint8_t> frame_bytes(MsgType type, const std::vector<uint8_t>& payload) {
  if (payload.size() + 1 > kMaxFrameLen) throw FrameError("frame too large");
  std::vector<uint8_t> out;
  out.reserve(5 + payload.size());
  wire::put_u32_be(out, static_cast<uint32_t>(payload.size() + 1));
  out.push_back(static_cast<uint8_t>(type));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline MsgType check_frame_type(uint8_t tag) {
  if (tag < 1 || tag > 10) throw FrameError("unknown frame type " + std::to_string(tag));
  return static_cast<MsgType>(tag);
}

// Splits one complete frame off the front of a byte buffer; returns false
// when more bytes are needed.
inline bool parse_frame(const std::vector<uint8_t>& buf, Frame& out, size_t* consumed) {
  if (buf.size() < 4) return false;
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = len << 8 | buf[i];
  if (len < 1 || len > kMaxFrameLen) throw FrameError("bad frame length");
  if (buf.size() < 4 + static_cast<size_t>(len)) return false;
  out.type = check_frame_type(buf[4]);
  out.payload.assign(buf.begin() + 5, buf.begin() + 4 + len);
  *consumed = 4 + static_cast<size_t>(len);
  return true;
}

// ---- tensor codec ----
// 1-byte rank, rank 4-byte big-endian dims, 1-byte word size, then the
// words little-endian.  A 1-element 64-bit tensor holding 1 is the 14
// bytes 01 00000001 40 0100000000000000.

struct WireTensor {
  std::vector<uint32_t> dims;
  int word_bits = 64;
  std::vector<uint64_t> words;

  size_t numel() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

inline void encode_tensor(std::vector<uint8_t>& out, const WireTensor& t) {
  if (t.dims.empty() || t.dims.size() > 8) throw FrameError("tensor rank out of range");
  if (t.word_bits != 32 && t.word_bits != 64) throw FrameError("tensor word size must be 32 or 64");
  if (t.words.size() != t.numel()) throw FrameError("tensor words do not match dims");
  out.push_back(static_cast<uint8_t>(t.dims.size()));
  for (uint32_t d : t.dims) wire::put_u32_be(out, d);
  out.push_back(static_cast<uint8_t>(t.word_bits));
  for (uint64_t w : t.words) wire::put_word_le(out, w, t.word_bits);
}

inline WireTensor decode_tensor(wire::Reader& r) {
  WireTensor t;
  uint8_t rank = r.u8();
  if (rank < 1 || rank > 8) throw FrameError("tensor rank out of range");
  t.dims.resize(rank);
  size_t numel = 1;
  for (auto& d : t.dims) {
    d = r.u32_be();
    if (d == 0) throw FrameError("tensor with a zero dimension");
    if (numel > kMaxFrameLen / d) throw FrameError("tensor too large");
    numel *= d;
  }
  t.word_bits = r.u8();
  if (t.word_bits != 32 && t.word_bits != 64)
    throw FrameError("tensor word size must be 32 or 64");
  if (r.n - r.off < numel * (static_cast<size_t>(t.word_bits) / 8))
    throw FrameError("message payload truncated");
  t.words.resize(numel);
  for (auto& w : t.words) w = r.word_le(t.word_bits);
  return t;
}

inline WireTensor vector_tensor(const std::vector<uint64_t>& words, int word_bits) {
  WireTensor t;
  t.dims = {static_cast<uint32_t>(words.size())};
  t.word_bits = word_bits;
  t.words = words;
  return t;
}

// ---- message payloads ----

struct HelloMsg {
  uint8_t word_bits = 64;
  uint8_t precision = 4;
  std::string token;
  std::string session;
};

inline std::vector<uint8_t> encode_hello(const HelloMsg& m) {
  std::vector<uint8_t> out;
  out.push_back(m.word_bits);
  out.push_back(m.precision);
  wire::put_u16_be(out, static_cast<uint16_t>(m.token.size()));
  out.insert(out.end(), m.token.begin(), m.token.end());
  wire::put_u16_be(out, static_cast<uint16_t>(m.session.size()));
  out.insert(out.end(), m.session.begin(), m.session.end());
  return out;
}

inline HelloMsg decode_hello(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  HelloMsg m;
  m.word_bits = r.u8();
  m.precision = r.u8();
  m.token = r.str(r.u16_be());
  m.session = r.str(r.u16_be());
  r.done();
  return m;
}

struct ConfigAckMsg {
  uint8_t word_bits = 64;
  uint8_t precision = 4;
  uint32_t model_digest = 0;
  std::string arch_text;
};

inline std::vector<uint8_t> encode_config_ack(const ConfigAckMsg& m) {
  std::vector<uint8_t> out;
  out.push_back(m.word_bits);
  out.push_back(m.precision);
  wire::put_u32_be(out, m.model_digest);
  wire::put_u32_be(out, static_cast<uint32_t>(m.arch_text.size()));
  out.insert(out.end(), m.arch_text.begin(), m.arch_text.end());
  return out;
}

inline ConfigAckMsg decode_config_ack(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  ConfigAckMsg m;
  m.word_bits = r.u8();
  m.precision = r.u8();
  m.model_digest = r.u32_be();
  m.arch_text = r.str(r.u32_be());
  r.done();
  return m;
}

struct PlanRequestMsg {
  uint8_t party = 0;
  std::string session;
  std::vector<uint8_t> plan;
};

inline std::vector<uint8_t> encode_plan_request(const PlanRequestMsg& m) {
  std::vector<uint8_t> out;
  out.push_back(m.party);
  wire::put_u16_be(out, static_cast<uint16_t>(m.session.size()));
  out.insert(out.end(), m.session.begin(), m.session.end());
  wire::put_u32_be(out, static_cast<uint32_t>(m.plan.size()));
  out.insert(out.end(), m.plan.begin(), m.plan.end());
  return out;
}

inline PlanRequestMsg decode_plan_request(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  PlanRequestMsg m;
  m.party = r.u8();
  if (m.party > 1) throw FrameError("party must be 0 or 1");
  m.session = r.str(r.u16_be());
  m.plan = r.bytes(r.u32_be());
  r.done();
  return m;
}

struct MaterialChunkMsg {
  uint32_t layer = 0;
  std::vector<uint8_t> material;
};

inline std::vector<uint8_t> encode_material_chunk(const MaterialChunkMsg& m) {
  std::vector<uint8_t> out;
  wire::put_u32_be(out, m.layer);
  wire::put_u32_be(out, static_cast<uint32_t>(m.material.size()));
  out.insert(out.end(), m.material.begin(), m.material.end());
  return out;
}

inline MaterialChunkMsg decode_material_chunk(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  MaterialChunkMsg m;
  m.layer = r.u32_be();
  m.material = r.bytes(r.u32_be());
  r.done();
  return m;
}

struct WeightCommitMsg {
  std::vector<std::pair<std::string, WireTensor>> tensors;
};

inline std::vector<uint8_t> encode_weight_commit(const WeightCommitMsg& m) {
  std::vector<uint8_t> out;
  wire::put_u32_be(out, static_cast<uint32_t>(m.tensors.size()));
  for (const auto& [name, tensor] : m.tensors) {
    wire::put_u16_be(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    encode_tensor(out, tensor);
  }
  return out;
}

inline WeightCommitMsg decode_weight_commit(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  WeightCommitMsg m;
  uint32_t count = r.u32_be();
  m.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u16_be());
    m.tensors.emplace_back(std::move(name), decode_tensor(r));
  }
  r.done();
  return m;
}

struct OpenMsg {
  uint32_t round = 0;
  WireTensor masked;
};

inline std::vector<uint8_t> encode_open(const OpenMsg& m) {
  std::vector<uint8_t> out;
  wire::put_u32_be(out, m.round);
  encode_tensor(out, m.masked);
  return out;
}

inline OpenMsg decode_open(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  OpenMsg m;
  m.round = r.u32_be();
  m.masked = decode_tensor(r);
  r.done();
  return m;
}

struct AbortMsg {
  AbortCode code = AbortCode::Internal;
  std::string reason;
};

inline std::vector<uint8_t> encode_abort(const AbortMsg& m) {
  std::vector<uint8_t> out;
  wire::put_u16_be(out, static_cast<uint16_t>(m.code));
  wire::put_u16_be(out, static_cast<uint16_t>(m.reason.size()));
  out.insert(out.end(), m.reason.begin(), m.reason.end());
  return out;
}

inline AbortMsg decode_abort(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  AbortMsg m;
  uint16_t code = r.u16_be();
  if (code < 1 || code > 7) throw FrameError("unknown abort code");
  m.code = static_cast<AbortCode>(code);
  m.reason = r.str(r.u16_be());
  r.done();
  return m;
}

inline std::vector<uint8_t> encode_tensor_payload(const WireTensor& t) {
  std::vector<uint8_t> out;
  encode_tensor(out, t);
  return out;
}

inline WireTensor decode_tensor_payload(const std::vector<uint8_t>& payload) {
  wire::Reader r{payload.data(), payload.size()};
  WireTensor t = decode_tensor(r);
  r.done();
  return t;
}

}  // namespace sinfer
