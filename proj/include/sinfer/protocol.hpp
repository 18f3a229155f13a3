#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sinfer/dealer.hpp"
#include "sinfer/model.hpp"
#include "sinfer/secure_tensor.hpp"
#include "sinfer/transport.hpp"
#include "sinfer/wire.hpp"

namespace sinfer {

using TransportFactory = std::function<std::unique_ptr<Transport>()>;

inline void send_abort(Transport& t, AbortCode code, const std::string& reason) {
  try {
    t.send(MsgType::Abort, encode_abort(AbortMsg{code, reason}));
  } catch (...) {
  }
}

[[noreturn]] inline void throw_abort(const AbortMsg& m) {
  throw AbortError(std::string("peer aborted: ") + abort_code_name(m.code) +
                   ": " + m.reason);
}

// Receives one frame and insists on the given type; a received Abort is
// surfaced as AbortError instead.
inline Frame expect_frame(Transport& t, MsgType want) {
  Frame f = t.recv();
  if (f.type == MsgType::Abort) throw_abort(decode_abort(f.payload));
  if (f.type != want)
    throw ProtocolError("expected frame type " +
                        std::to_string(static_cast<int>(want)) + ", got " +
                        std::to_string(static_cast<int>(f.type)));
  return f;
}

// Opening channel that ships masked share vectors as numbered broadcast
// frames over a transport.
class TransportChannel : public OpenChannel {
 public:
  TransportChannel(Transport& t, Ring ring) : t_(t), ring_(ring) {}

  std::vector<uint64_t> open(const std::vector<uint64_t>& mine) override {
    OpenMsg out{round_, vector_tensor(mine, ring_.bits)};
    t_.send(MsgType::OpenBroadcast, encode_open(out));
    Frame f = expect_frame(t_, MsgType::OpenBroadcast);
    OpenMsg in = decode_open(f.payload);
    if (in.round != round_) throw ProtocolError("opening rounds out of step");
    if (in.masked.word_bits != ring_.bits || in.masked.words.size() != mine.size())
      throw ProtocolError("peer opened a vector of the wrong shape");
    std::vector<uint64_t> sum(mine.size());
    for (size_t i = 0; i < sum.size(); ++i)
      sum[i] = ring_.add(mine[i], in.masked.words[i]);
    ++round_;
    return sum;
  }

  size_t rounds() const override { return round_; }

 private:
  Transport& t_;
  Ring ring_;
  uint32_t round_ = 0;
};

// ---- dealer ----

// Pairs the two computing parties of a session, checks that they agreed on
// the same preprocessing plan, and deals each its half of the material.
// Material depends only on the plan and the dealer's seed schedule, never
// on inputs or weights, which the dealer does not see.
class DealerState {
 public:
  explicit DealerState(uint64_t seed) : root_(seed_from_u64(seed)) {}

  void serve_one(Transport& t) {
    PlanRequestMsg req;
    try {
      Frame f = expect_frame(t, MsgType::PlanRequest);
      req = decode_plan_request(f.payload);
    } catch (const FrameError& e) {
      send_abort(t, AbortCode::Malformed, e.what());
      throw;
    }

    Entry* e = nullptr;
    int party = req.party;
    {
      std::unique_lock<std::mutex> lock(mu_);
      Entry& entry = sessions_[req.session];
      e = &entry;
      if (entry.seen[party]) {
        entry.fail(AbortCode::Malformed, "both parties claimed the same role");
        cv_.notify_all();
        send_abort(t, entry.code, entry.reason);
        throw AbortError(entry.reason);
      }
      entry.seen[party] = true;
      if (!entry.seen[1 - party]) {
        entry.plan_bytes = req.plan;
        bool ok = cv_.wait_for(lock, std::chrono::milliseconds(io_timeout_ms()),
                               [&] { return entry.ready || entry.failed; });
        if (!ok) {
          entry.fail(AbortCode::DealerUnavailable, "peer party never arrived");
          sessions_.erase(req.session);
          send_abort(t, AbortCode::DealerUnavailable, "peer party never arrived");
          throw AbortError("peer party never arrived");
        }
      } else if (entry.plan_bytes != req.plan) {
        entry.fail(AbortCode::PlanMismatch, "parties submitted different plans");
        cv_.notify_all();
      } else {
        try {
          PreprocessingPlan plan = plan_from_bytes(req.plan.data(), req.plan.size());
          Seed128 session_seed = derive_seed(root_, next_nonce_++);
          auto mat = generate_material(plan, session_seed);
          entry.material[0] = std::move(mat.first);
          entry.material[1] = std::move(mat.second);
          entry.ready = true;
        } catch (const std::exception& ex) {
          entry.fail(AbortCode::Malformed, ex.what());
        }
        cv_.notify_all();
      }
      if (entry.failed) {
        AbortCode code = entry.code;
        std::string reason = entry.reason;
        if (++entry.taken == 2) sessions_.erase(req.session);
        lock.unlock();
        send_abort(t, code, reason);
        throw AbortError(reason);
      }
    }

    const std::vector<LayerMaterial>& mine = e->material[party];
    std::vector<uint8_t> reply;
    wire::put_u32_be(reply, static_cast<uint32_t>(mine.size()));
    t.send(MsgType::PlanReply, reply);
    for (size_t i = 0; i < mine.size(); ++i) {
      MaterialChunkMsg chunk;
      chunk.layer = static_cast<uint32_t>(i);
      serialize_layer_material(mine[i], chunk.material);
      t.send(MsgType::MaterialChunk, encode_material_chunk(chunk));
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (++e->taken == 2) sessions_.erase(req.session);
    }
  }

 private:
  struct Entry {
    std::vector<uint8_t> plan_bytes;
    bool seen[2] = {false, false};
    bool ready = false;
    bool failed = false;
    AbortCode code = AbortCode::Internal;
    std::string reason;
    std::array<std::vector<LayerMaterial>, 2> material;
    int taken = 0;

    void fail(AbortCode c, const std::string& why) {
      if (!failed) {
        failed = true;
        code = c;
        reason = why;
      }
    }
  };

  Seed128 root_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Entry> sessions_;
  uint64_t next_nonce_ = 0;
};

// Fetches this party's material for a session from the dealer.
inline std::vector<LayerMaterial> fetch_material(Transport& dealer, int party,
                                                 const std::string& session,
                                                 const PreprocessingPlan& plan) {
  PlanRequestMsg req;
  req.party = static_cast<uint8_t>(party);
  req.session = session;
  req.plan = plan_to_bytes(plan);
  dealer.send(MsgType::PlanRequest, encode_plan_request(req));

  Frame reply = expect_frame(dealer, MsgType::PlanReply);
  wire::Reader r{reply.payload.data(), reply.payload.size()};
  uint32_t layers = r.u32_be();
  r.done();
  if (layers != plan.layers.size())
    throw ProtocolError("dealer planned a different layer count");

  std::vector<LayerMaterial> material(layers);
  for (uint32_t i = 0; i < layers; ++i) {
    Frame f = expect_frame(dealer, MsgType::MaterialChunk);
    MaterialChunkMsg chunk = decode_material_chunk(f.payload);
    if (chunk.layer != i) throw ProtocolError("material chunks out of order");
    size_t used = 0;
    material[i] = parse_layer_material(chunk.material.data(), chunk.material.size(), &used);
    if (used != chunk.material.size())
      throw FormatError("trailing bytes in material chunk");
  }
  return material;
}

// ---- model owner ----

struct ServerState {
  ModelSpec spec;
  ModelWeights weights;
  std::string arch;
  uint32_t digest = 0;
  int quota = 1 << 30;
  uint64_t seed = 1;

  std::mutex mu;
  int admitted = 0;
  uint64_t share_nonce = 0;

  ServerState(ModelSpec s, ModelWeights w, int quota_, uint64_t seed_)
      : spec(std::move(s)),
        weights(std::move(w)),
        arch(canonical_text(spec)),
        digest(model_digest(spec, weights)),
        quota(quota_),
        seed(seed_) {}
};

namespace detail {

inline void serve_session_inner(Transport& client, const TransportFactory& dealer_connect,
                                ServerState& st) {
  Frame hf = expect_frame(client, MsgType::Hello);
  HelloMsg hello = decode_hello(hf.payload);

  {
    std::lock_guard<std::mutex> lock(st.mu);
    if (st.admitted >= st.quota) {
      send_abort(client, AbortCode::QuotaExceeded, "inference quota exhausted");
      throw AbortError("inference quota exhausted");
    }
    ++st.admitted;
  }

  if ((hello.word_bits != 32 && hello.word_bits != 64) || hello.precision < 1 ||
      hello.precision > 16) {
    send_abort(client, AbortCode::ConfigMismatch, "unsupported ring or precision");
    throw AbortError("unsupported ring or precision");
  }

  FixedCodec codec(hello.word_bits, hello.precision);
  QuantizedModel q;
  try {
    q = quantize_weights(st.spec, st.weights, codec);
  } catch (const OverflowError& e) {
    send_abort(client, AbortCode::Overflow, e.what());
    throw AbortError(e.what());
  }

  ConfigAckMsg ack;
  ack.word_bits = hello.word_bits;
  ack.precision = hello.precision;
  ack.model_digest = st.digest;
  ack.arch_text = st.arch;
  client.send(MsgType::ConfigAck, encode_config_ack(ack));

  uint64_t nonce;
  {
    std::lock_guard<std::mutex> lock(st.mu);
    nonce = st.share_nonce++;
  }
  Prg share_rng = Prg::from_seed(seed_from_u64(st.seed), nonce);
  auto wshares = split_model_shares(q, share_rng);

  WeightCommitMsg commit;
  auto plan_shapes = weight_plan(st.spec);
  for (const auto& [name, shape] : plan_shapes) {
    WireTensor t;
    for (size_t d : shape) t.dims.push_back(static_cast<uint32_t>(d));
    t.word_bits = hello.word_bits;
    t.words = wshares.first.t.at(name);
    commit.tensors.emplace_back(name, std::move(t));
  }
  client.send(MsgType::WeightShareCommit, encode_weight_commit(commit));

  PreprocessingPlan plan = plan_preprocessing(st.spec, hello.word_bits, hello.precision);
  std::vector<LayerMaterial> material;
  try {
    std::unique_ptr<Transport> dealer = dealer_connect();
    material = fetch_material(*dealer, 1, hello.session, plan);
    dealer->close();
  } catch (const AbortError&) {
    send_abort(client, AbortCode::DealerUnavailable, "dealer rejected the session");
    throw;
  } catch (const std::exception& e) {
    send_abort(client, AbortCode::DealerUnavailable, e.what());
    throw AbortError(std::string("dealer unreachable: ") + e.what());
  }

  Frame xf = expect_frame(client, MsgType::InputShare);
  WireTensor xs = decode_tensor_payload(xf.payload);
  if (xs.word_bits != hello.word_bits ||
      xs.words.size() != st.spec.in_c * st.spec.in_h * st.spec.in_w) {
    send_abort(client, AbortCode::Malformed, "input share has the wrong shape");
    throw AbortError("input share has the wrong shape");
  }

  TransportChannel ch(client, codec.ring);
  std::vector<uint64_t> logits1 =
      secure_infer(st.spec, codec, 1, ch, wshares.second, material, xs.words);

  client.send(MsgType::LogitsShare, encode_tensor_payload(vector_tensor(logits1, codec.ring.bits)));
}

}  // namespace detail

// Runs one full inference session against a connected client.  The model
// owner never sees the plain input or the plain logits; it only handles
// its own shares and uniformly masked openings.
inline void serve_session(Transport& client, const TransportFactory& dealer_connect,
                          ServerState& st) {
  try {
    detail::serve_session_inner(client, dealer_connect, st);
  } catch (const AbortError&) {
    throw;
  } catch (const OverflowError& e) {
    send_abort(client, AbortCode::Overflow, e.what());
    throw;
  } catch (const FrameError& e) {
    send_abort(client, AbortCode::Malformed, e.what());
    throw;
  } catch (const std::exception& e) {
    send_abort(client, AbortCode::Internal, e.what());
    throw;
  }
}

// ---- data owner ----

struct ClientConfig {
  int word_bits = 64;
  int precision = 4;
  std::string token = "client";
  std::string session = "session-0";
  uint64_t seed = 7;
};

struct PhaseTimings {
  double preprocessing_ms = 0;
  double upload_ms = 0;
  double online_ms = 0;
  double reveal_ms = 0;

  double total_ms() const { return preprocessing_ms + upload_ms + online_ms + reveal_ms; }
};

struct InferenceResult {
  std::vector<double> logits;
  std::vector<uint64_t> logit_words;
  size_t predicted = 0;
  size_t rounds = 0;
  uint32_t model_digest = 0;
  std::string arch_text;
  PhaseTimings timings;
};

// Runs one inference as the data owner.  The input never leaves this
// process in the clear: only one additive share of it is uploaded, and the
// logits are reconstructed locally from the two logit shares.
inline InferenceResult run_client_session(Transport& server,
                                          const TransportFactory& dealer_connect,
                                          const ClientConfig& cfg,
                                          const std::vector<double>& input) {
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  FixedCodec codec(cfg.word_bits, cfg.precision);
  const Ring& ring = codec.ring;

  auto t_upload = clock::now();
  HelloMsg hello;
  hello.word_bits = static_cast<uint8_t>(cfg.word_bits);
  hello.precision = static_cast<uint8_t>(cfg.precision);
  hello.token = cfg.token;
  hello.session = cfg.session;
  server.send(MsgType::Hello, encode_hello(hello));

  Frame af = expect_frame(server, MsgType::ConfigAck);
  ConfigAckMsg ack = decode_config_ack(af.payload);
  if (ack.word_bits != cfg.word_bits || ack.precision != cfg.precision)
    throw ProtocolError("server acknowledged a different encoding");
  ModelSpec spec = parse_arch_text(ack.arch_text);
  if (input.size() != spec.in_c * spec.in_h * spec.in_w)
    throw ShapeError("input does not match the advertised architecture");

  Frame wf = expect_frame(server, MsgType::WeightShareCommit);
  WeightCommitMsg commit = decode_weight_commit(wf.payload);
  QuantizedModel wshare;
  wshare.word_bits = cfg.word_bits;
  wshare.precision = cfg.precision;
  {
    auto plan_shapes = weight_plan(spec);
    if (commit.tensors.size() != plan_shapes.size())
      throw ProtocolError("weight share tensor count does not match the architecture");
    for (auto& [name, tensor] : commit.tensors) {
      auto it = plan_shapes.find(name);
      if (it == plan_shapes.end())
        throw ProtocolError("unexpected weight share tensor " + name);
      std::vector<uint32_t> want(it->second.begin(), it->second.end());
      if (tensor.dims != want || tensor.word_bits != cfg.word_bits)
        throw ProtocolError("weight share tensor " + name + " has the wrong shape");
      wshare.t[name] = std::move(tensor.words);
    }
  }
  InferenceResult res;
  res.model_digest = ack.model_digest;
  res.arch_text = ack.arch_text;
  res.timings.upload_ms = ms_since(t_upload);

  auto t_pre = clock::now();
  PreprocessingPlan plan = plan_preprocessing(spec, cfg.word_bits, cfg.precision);
  std::vector<LayerMaterial> material;
  {
    std::unique_ptr<Transport> dealer = dealer_connect();
    material = fetch_material(*dealer, 0, cfg.session, plan);
    dealer->close();
  }
  res.timings.preprocessing_ms = ms_since(t_pre);

  auto t_send = clock::now();
  std::vector<uint64_t> xwords(input.size());
  for (size_t i = 0; i < input.size(); ++i) xwords[i] = codec.encode(input[i]);
  Prg input_rng = Prg::from_seed(seed_from_u64(cfg.seed), 0x696e7075);
  auto xshares = split_shares(ring, xwords, input_rng);
  server.send(MsgType::InputShare,
              encode_tensor_payload(vector_tensor(xshares.second, cfg.word_bits)));
  res.timings.upload_ms += ms_since(t_send);

  auto t_online = clock::now();
  TransportChannel ch(server, ring);
  std::vector<uint64_t> logits0 =
      secure_infer(spec, codec, 0, ch, wshare, material, xshares.first);
  res.rounds = ch.rounds();
  res.timings.online_ms = ms_since(t_online);

  auto t_reveal = clock::now();
  Frame lf = expect_frame(server, MsgType::LogitsShare);
  WireTensor ls = decode_tensor_payload(lf.payload);
  if (ls.word_bits != cfg.word_bits || ls.words.size() != logits0.size())
    throw ProtocolError("logits share has the wrong shape");
  res.logit_words = reconstruct(ring, logits0, ls.words);
  res.logits.resize(res.logit_words.size());
  for (size_t i = 0; i < res.logit_words.size(); ++i)
    res.logits[i] = codec.decode(res.logit_words[i]);
  res.predicted = argmax_fixed(ring, res.logit_words);
  res.timings.reveal_ms = ms_since(t_reveal);
  return res;
}

// ---- in-process trio ----

// Runs dealer, model owner, and data owner as threads of one process over
// queue transports; same protocol, no sockets.
inline InferenceResult inproc_infer(ServerState& st, DealerState& dealer,
                                    const ClientConfig& cfg,
                                    const std::vector<double>& input) {
  auto [client_end, server_end] = InProcTransport::make_pair();
  auto [dealer_c0, dealer_c1] = InProcTransport::make_pair();
  auto [dealer_s0, dealer_s1] = InProcTransport::make_pair();

  std::exception_ptr dealer_err, server_err;
  Transport* dc1 = dealer_c1.get();
  Transport* ds1 = dealer_s1.get();
  std::thread dealer_thread([&dealer, dc1, ds1, &dealer_err] {
    std::thread second([&dealer, ds1] {
      try {
        dealer.serve_one(*ds1);
      } catch (...) {
      }
    });
    try {
      dealer.serve_one(*dc1);
    } catch (...) {
      dealer_err = std::current_exception();
    }
    second.join();
  });

  Transport* srv = server_end.get();
  std::thread server_thread([&st, srv, &dealer_s0, &server_err] {
    try {
      auto factory = [&dealer_s0]() -> std::unique_ptr<Transport> {
        return std::move(dealer_s0);
      };
      serve_session(*srv, factory, st);
    } catch (...) {
      server_err = std::current_exception();
    }
  });

  InferenceResult res;
  std::exception_ptr client_err;
  try {
    auto factory = [&dealer_c0]() -> std::unique_ptr<Transport> {
      return std::move(dealer_c0);
    };
    res = run_client_session(*client_end, factory, cfg, input);
  } catch (...) {
    client_err = std::current_exception();
  }
  client_end->close();
  server_thread.join();
  if (dealer_c0) dealer_c0->close();
  if (dealer_s0) dealer_s0->close();
  dealer_thread.join();

  if (client_err) std::rethrow_exception(client_err);
  if (server_err) std::rethrow_exception(server_err);
  if (dealer_err) std::rethrow_exception(dealer_err);
  return res;
}

// ---- socket daemons ----

class DealerDaemon {
 public:
  DealerDaemon(uint16_t port, uint64_t seed) : state_(seed), listener_(port) {
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~DealerDaemon() { stop(); }

  uint16_t port() const { return listener_.port(); }

  void stop() {
    if (stopped_.exchange(true)) return;
    listener_.close();
    acceptor_.join();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

 private:
  void accept_loop() {
    for (;;) {
      std::unique_ptr<TcpTransport> conn;
      try {
        conn = listener_.accept();
      } catch (...) {
        return;
      }
      std::shared_ptr<Transport> t(std::move(conn));
      std::lock_guard<std::mutex> lock(mu_);
      workers_.emplace_back([this, t] {
        try {
          state_.serve_one(*t);
        } catch (...) {
        }
        t->close();
      });
    }
  }

  DealerState state_;
  TcpListener listener_;
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
};

class ServerDaemon {
 public:
  ServerDaemon(uint16_t port, ModelSpec spec, ModelWeights weights, int quota,
               uint64_t seed, std::string dealer_host, uint16_t dealer_port)
      : state_(std::move(spec), std::move(weights), quota, seed),
        dealer_host_(std::move(dealer_host)),
        dealer_port_(dealer_port),
        listener_(port) {
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  ~ServerDaemon() { stop(); }

  uint16_t port() const { return listener_.port(); }
  uint32_t model_digest() const { return state_.digest; }

  void stop() {
    if (stopped_.exchange(true)) return;
    listener_.close();
    acceptor_.join();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

 private:
  void accept_loop() {
    for (;;) {
      std::unique_ptr<TcpTransport> conn;
      try {
        conn = listener_.accept();
      } catch (...) {
        return;
      }
      std::shared_ptr<Transport> t(std::move(conn));
      std::string host = dealer_host_;
      uint16_t port = dealer_port_;
      std::lock_guard<std::mutex> lock(mu_);
      workers_.emplace_back([this, t, host, port] {
        try {
          serve_session(*t, [&] { return tcp_connect(host, port); }, state_);
        } catch (...) {
        }
        t->close();
      });
    }
  }

  ServerState state_;
  std::string dealer_host_;
  uint16_t dealer_port_;
  TcpListener listener_;
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
};

// Runs one inference against live dealer and model-owner endpoints.
inline InferenceResult tcp_infer(const std::string& server_host, uint16_t server_port,
                                 const std::string& dealer_host, uint16_t dealer_port,
                                 const ClientConfig& cfg, const std::vector<double>& input) {
  std::unique_ptr<Transport> server = tcp_connect(server_host, server_port);
  InferenceResult res = run_client_session(
      *server, [&] { return tcp_connect(dealer_host, dealer_port); }, cfg, input);
  server->close();
  return res;
}

}  // namespace sinfer
