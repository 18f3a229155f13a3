#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <vector>

#include "sinfer/errors.hpp"
#include "sinfer/prng.hpp"
#include "sinfer/ring.hpp"

namespace sinfer {

// Splits values into two additive shares.  The first share is a pure
// function of the randomness stream, independent of the values.
inline std::pair<std::vector<uint64_t>, std::vector<uint64_t>> split_shares(
    const Ring& ring, const std::vector<uint64_t>& values, Prg& rng) {
  std::vector<uint64_t> s0(values.size()), s1(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    s0[i] = ring.reduce(rng.next_u64());
    s1[i] = ring.sub(values[i], s0[i]);
  }
  return {std::move(s0), std::move(s1)};
}

inline std::vector<uint64_t> reconstruct(const Ring& ring,
                                         const std::vector<uint64_t>& a,
                                         const std::vector<uint64_t>& b) {
  if (a.size() != b.size()) throw ProtocolError("share length mismatch");
  std::vector<uint64_t> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = ring.add(a[i], b[i]);
  return out;
}

// One party's half of a multiplication triple c = a * b.
struct ScalarTripleShare {
  uint64_t a = 0, b = 0, c = 0;
};

// One party's half of a matrix triple: a is (m,k), b is (k,n), c = a*b.
struct MatTripleShare {
  size_t m = 0, k = 0, n = 0;
  std::vector<uint64_t> a, b, c;
};

// Synchronous opening channel between the two computing parties.  One call
// is one communication round; both parties must open vectors of equal
// length in matching order.
class OpenChannel {
 public:
  virtual ~OpenChannel() = default;
  virtual std::vector<uint64_t> open(const std::vector<uint64_t>& mine) = 0;
  virtual size_t rounds() const = 0;
};

// In-process rendezvous for two threads playing the two parties.
class LocalPair {
 public:
  explicit LocalPair(Ring ring) : ring_(ring) {}

  std::vector<uint64_t> exchange(int party, const std::vector<uint64_t>& mine) {
    std::unique_lock lk(m_);
    cv_.wait(lk, [&] { return !have_[party]; });
    slot_[party] = mine;
    have_[party] = true;
    cv_.notify_all();
    cv_.wait(lk, [&] { return have_[0] && have_[1]; });
    if (slot_[0].size() != slot_[1].size())
      throw ProtocolError("parties opened different lengths");
    std::vector<uint64_t> sum(mine.size());
    for (size_t i = 0; i < sum.size(); ++i)
      sum[i] = ring_.add(slot_[0][i], slot_[1][i]);
    taken_[party] = true;
    if (taken_[0] && taken_[1]) {
      have_[0] = have_[1] = false;
      taken_[0] = taken_[1] = false;
      ++rounds_;
    }
    cv_.notify_all();
    return sum;
  }

  size_t rounds() const {
    std::unique_lock lk(m_);
    return rounds_;
  }

 private:
  Ring ring_;
  mutable std::mutex m_;
  std::condition_variable cv_;
  std::vector<uint64_t> slot_[2];
  bool have_[2] = {false, false};
  bool taken_[2] = {false, false};
  size_t rounds_ = 0;
};

class LocalEnd : public OpenChannel {
 public:
  LocalEnd(LocalPair* pair, int party) : pair_(pair), party_(party) {}
  std::vector<uint64_t> open(const std::vector<uint64_t>& mine) override {
    return pair_->exchange(party_, mine);
  }
  size_t rounds() const override { return pair_->rounds(); }

 private:
  LocalPair* pair_;
  int party_;
};

// Plain modular matrix product, used on shares and on opened values alike.
inline std::vector<uint64_t> mat_mul_mod(const Ring& ring,
                                         const std::vector<uint64_t>& a,
                                         const std::vector<uint64_t>& b,
                                         size_t m, size_t k, size_t n) {
  std::vector<uint64_t> c(m * n, 0);
  for (size_t i = 0; i < m; ++i) {
    const uint64_t* arow = &a[i * k];
    uint64_t* crow = &c[i * n];
    for (size_t kk = 0; kk < k; ++kk) {
      uint64_t av = arow[kk];
      if (av == 0) continue;
      const uint64_t* brow = &b[kk * n];
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
    for (size_t j = 0; j < n; ++j) crow[j] &= ring.mask;
  }
  return c;
}

// Secure matrix product of shared x (m,k) and shared y (k,n) with one
// opening round.
inline std::vector<uint64_t> beaver_matmul(const Ring& ring, int party,
                                           OpenChannel& ch,
                                           const std::vector<uint64_t>& x,
                                           const std::vector<uint64_t>& y,
                                           const MatTripleShare& t) {
  if (x.size() != t.m * t.k || y.size() != t.k * t.n)
    throw ProtocolError("triple does not match operand shapes");
  std::vector<uint64_t> masked(x.size() + y.size());
  for (size_t i = 0; i < x.size(); ++i) masked[i] = ring.sub(x[i], t.a[i]);
  for (size_t i = 0; i < y.size(); ++i)
    masked[x.size() + i] = ring.sub(y[i], t.b[i]);
  std::vector<uint64_t> opened = ch.open(masked);

  std::vector<uint64_t> eps(opened.begin(), opened.begin() + x.size());
  std::vector<uint64_t> del(opened.begin() + x.size(), opened.end());

  std::vector<uint64_t> z = mat_mul_mod(ring, eps, t.b, t.m, t.k, t.n);
  std::vector<uint64_t> ad = mat_mul_mod(ring, t.a, del, t.m, t.k, t.n);
  for (size_t i = 0; i < z.size(); ++i)
    z[i] = ring.add(ring.add(z[i], ad[i]), t.c[i]);
  if (party == 0) {
    std::vector<uint64_t> ed = mat_mul_mod(ring, eps, del, t.m, t.k, t.n);
    for (size_t i = 0; i < z.size(); ++i) z[i] = ring.add(z[i], ed[i]);
  }
  return z;
}

// Element-wise secure products with one opening round; triples[i] covers
// x[i] * y[i].
inline std::vector<uint64_t> mul_elementwise(const Ring& ring, int party,
                                             OpenChannel& ch,
                                             const std::vector<uint64_t>& x,
                                             const std::vector<uint64_t>& y,
                                             const ScalarTripleShare* triples) {
  size_t n = x.size();
  if (y.size() != n) throw ProtocolError("operand length mismatch");
  std::vector<uint64_t> masked(2 * n);
  for (size_t i = 0; i < n; ++i) {
    masked[i] = ring.sub(x[i], triples[i].a);
    masked[n + i] = ring.sub(y[i], triples[i].b);
  }
  std::vector<uint64_t> opened = ch.open(masked);
  std::vector<uint64_t> z(n);
  for (size_t i = 0; i < n; ++i) {
    uint64_t eps = opened[i], del = opened[n + i];
    uint64_t v = ring.add(triples[i].c,
                          ring.add(ring.mul(eps, triples[i].b),
                                   ring.mul(triples[i].a, del)));
    if (party == 0) v = ring.add(v, ring.mul(eps, del));
    z[i] = v;
  }
  return z;
}

}  // namespace sinfer
