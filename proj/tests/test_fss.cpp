#include <doctest.h>

#include <cstdio>

#include "sinfer/fss.hpp"
#include "sinfer/hex.hpp"

using namespace sinfer;

namespace {

uint64_t eval_sum(const Ring& ring, const DcfKey& k0, const DcfKey& k1,
                  uint64_t x, int comp = 0) {
  uint64_t a[2], b[2];
  dcf_eval(k0, x, a);
  dcf_eval(k1, x, b);
  return ring.add(a[comp], b[comp]);
}

}  // namespace

TEST_CASE("comparison shares sum to beta exactly below alpha, exhaustively") {
  for (int n : {1, 2, 3, 6}) {
    for (int wb : {8, 64}) {
      Ring ring(wb);
      Prg rng = Prg::from_seed(seed_from_u64(1000 + n * 10 + wb), 0);
      uint64_t top = 1ull << n;
      for (uint64_t alpha = 0; alpha < top; ++alpha) {
        uint64_t beta = ring.reduce(0x9e3779b97f4a7c15ull * (alpha + 1));
        DcfKey k0, k1;
        dcf_gen(n, wb, alpha, &beta, 1, rng, k0, k1);
        for (uint64_t x = 0; x < top; ++x) {
          uint64_t want = x < alpha ? beta : 0;
          REQUIRE(eval_sum(ring, k0, k1, x) == want);
        }
      }
    }
  }
}

TEST_CASE("comparison keys over a 10-bit domain, random pairs, all inputs") {
  Ring ring(64);
  Prg rng = Prg::from_seed(seed_from_u64(77), 0);
  for (int trial = 0; trial < 25; ++trial) {
    uint64_t alpha = rng.next_u64() & 1023;
    uint64_t beta = rng.next_u64();
    DcfKey k0, k1;
    dcf_gen(10, 64, alpha, &beta, 1, rng, k0, k1);
    for (uint64_t x = 0; x < 1024; ++x) {
      uint64_t want = x < alpha ? beta : 0;
      REQUIRE(eval_sum(ring, k0, k1, x) == want);
    }
  }
}

TEST_CASE("comparison keys over the full 64-bit domain") {
  Ring ring(64);
  Prg rng = Prg::from_seed(seed_from_u64(78), 0);
  for (int trial = 0; trial < 40; ++trial) {
    uint64_t alpha = rng.next_u64();
    uint64_t beta = rng.next_u64();
    DcfKey k0, k1;
    dcf_gen(64, 64, alpha, &beta, 1, rng, k0, k1);

    auto check = [&](uint64_t x) {
      uint64_t want = x < alpha ? beta : 0;
      REQUIRE(eval_sum(ring, k0, k1, x) == want);
    };
    check(alpha);
    if (alpha > 0) check(alpha - 1);
    check(alpha + 1);
    check(0);
    check(~0ull);
    for (int i = 0; i < 40; ++i) check(rng.next_u64());
  }
}

TEST_CASE("two-component payloads evaluate component-wise") {
  Ring ring(64);
  Prg rng = Prg::from_seed(seed_from_u64(79), 0);
  for (int trial = 0; trial < 10; ++trial) {
    uint64_t alpha = rng.next_u64() & 0x7fffffffffffffffull;
    uint64_t beta[2] = {rng.next_u64(), rng.next_u64() & 1};
    DcfKey k0, k1;
    dcf_gen(63, 64, alpha, beta, 2, rng, k0, k1);
    for (int i = 0; i < 50; ++i) {
      uint64_t x = rng.next_u64() & 0x7fffffffffffffffull;
      if (i == 0) x = alpha;
      if (i == 1) x = alpha ? alpha - 1 : 1;
      uint64_t a[2], b[2];
      dcf_eval(k0, x, a);
      dcf_eval(k1, x, b);
      uint64_t want0 = x < alpha ? beta[0] : 0;
      uint64_t want1 = x < alpha ? beta[1] : 0;
      REQUIRE(ring.add(a[0], b[0]) == want0);
      REQUIRE(ring.add(a[1], b[1]) == want1);
    }
  }
}

TEST_CASE("comparison keys work in a 32-bit word ring") {
  Ring ring(32);
  Prg rng = Prg::from_seed(seed_from_u64(80), 0);
  uint64_t alpha = 0x89abcdefull & 0x7fffffffull;
  uint64_t beta = 0x13579bdf & 0xffffffffull;
  DcfKey k0, k1;
  dcf_gen(31, 32, alpha, &beta, 1, rng, k0, k1);
  for (int i = 0; i < 500; ++i) {
    uint64_t x = rng.next_u64() & 0x7fffffffull;
    uint64_t want = x < alpha ? beta : 0;
    REQUIRE(eval_sum(ring, k0, k1, x) == want);
  }
  REQUIRE(eval_sum(ring, k0, k1, alpha) == 0);
  REQUIRE(eval_sum(ring, k0, k1, alpha - 1) == beta);
}

TEST_CASE("key serialization round-trips byte-exactly") {
  Prg rng = Prg::from_seed(seed_from_u64(81), 0);
  uint64_t beta[2] = {0x1122334455667788ull, 1};
  DcfKey k0, k1;
  dcf_gen(21, 64, 0x155555, beta, 2, rng, k0, k1);

  std::vector<uint8_t> bytes;
  serialize_dcf(k0, bytes);
  CHECK(bytes.size() == k0.serialized_size());

  DcfKey back;
  size_t used = parse_dcf(bytes.data(), bytes.size(), back);
  CHECK(used == bytes.size());
  std::vector<uint8_t> again;
  serialize_dcf(back, again);
  CHECK(bytes == again);

  Ring ring(64);
  for (int i = 0; i < 64; ++i) {
    uint64_t x = rng.next_u64() & 0x1fffff;
    uint64_t a[2], b[2];
    dcf_eval(back, x, a);
    dcf_eval(k1, x, b);
    uint64_t want = x < 0x155555 ? beta[0] : 0;
    CHECK(ring.add(a[0], b[0]) == want);
  }

  CHECK_THROWS_AS(parse_dcf(bytes.data(), bytes.size() - 3, back), FormatError);
  std::vector<uint8_t> bad = bytes;
  bad[0] = 9;
  CHECK_THROWS_AS(parse_dcf(bad.data(), bad.size(), bad == bytes ? back : back), FormatError);
}

TEST_CASE("key generation is deterministic for a fixed seed") {
  uint64_t beta = 42;
  auto gen_bytes = [&](uint64_t seed) {
    Prg rng = Prg::from_seed(seed_from_u64(seed), 5);
    DcfKey k0, k1;
    dcf_gen(16, 64, 0xbeef, &beta, 1, rng, k0, k1);
    std::vector<uint8_t> b0, b1;
    serialize_dcf(k0, b0);
    serialize_dcf(k1, b1);
    b0.insert(b0.end(), b1.begin(), b1.end());
    return b0;
  };
  CHECK(gen_bytes(3) == gen_bytes(3));
  CHECK(gen_bytes(3) != gen_bytes(4));
}

TEST_CASE("serialized key golden bytes") {
  Prg rng = Prg::from_seed(seed_from_u64(0xd0d0), 0);
  uint64_t beta = 5;
  DcfKey k0, k1;
  dcf_gen(4, 64, 11, &beta, 1, rng, k0, k1);
  std::vector<uint8_t> b0, b1;
  serialize_dcf(k0, b0);
  serialize_dcf(k1, b1);
  CHECK(to_hex(b0) ==
        "0100044001eca5111945f8e6a51e0b31806f9676f544dbe02235571b5a603b9d"
        "86a2ed230a9efcc22de6d43ee503e41ea40ba7a72d36d03c627cb79f1acab4b4"
        "26d12d4cd4a900240078902d1ad15e61abbf20d50052767ee81be1b7c4d5eb01"
        "3eea2c6eda564fc21cd5cef7cf8134b8f6503d77a1c49bd7011d6299566f1bb5"
        "2d");
  CHECK(to_hex(b1) ==
        "01010440017a458a1c53b8e3250dc79cde4cca7ddd44dbe02235571b5a603b9d"
        "86a2ed230a9efcc22de6d43ee503e41ea40ba7a72d36d03c627cb79f1acab4b4"
        "26d12d4cd4a900240078902d1ad15e61abbf20d50052767ee81be1b7c4d5eb01"
        "3eea2c6eda564fc21cd5cef7cf8134b8f6503d77a1c49bd7011d6299566f1bb5"
        "2d");

  Ring ring(64);
  for (uint64_t x = 0; x < 16; ++x)
    CHECK(eval_sum(ring, k0, k1, x) == (x < 11 ? 5 : 0));
}
