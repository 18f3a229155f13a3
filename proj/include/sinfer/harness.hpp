#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sinfer/metrics.hpp"
#include "sinfer/model.hpp"
#include "sinfer/protocol.hpp"

namespace sinfer {

enum class SweepStatus { Ok, QuantizationMismatch, Overflow };

inline const char* sweep_status_name(SweepStatus s) {
  switch (s) {
    case SweepStatus::Ok: return "ok";
    case SweepStatus::QuantizationMismatch: return "quantization-mismatch";
    case SweepStatus::Overflow: return "overflow";
  }
  return "unknown";
}

// One precision's outcome: predicted label per item (-1 where the encoding
// overflowed), agreement with the float reference, and the dominant
// failure mode.
struct SweepRow {
  int precision = 0;
  size_t total = 0;
  size_t matched = 0;
  std::vector<int> predicted;
  SweepStatus status = SweepStatus::Ok;

  bool operator==(const SweepRow&) const = default;
};

struct SweepReport {
  int word_bits = 64;
  bool encrypted = false;
  std::vector<SweepRow> rows;

  bool operator==(const SweepReport&) const = default;
};

struct SweepOptions {
  int pmin = 1;
  int pmax = 16;
  int word_bits = 64;
  bool encrypted = false;
  size_t sample = 0;
  uint64_t seed = 1;
};

inline std::vector<size_t> float_predictions(const ModelSpec& spec, const ModelWeights& w,
                                             const std::vector<std::vector<double>>& inputs) {
  std::vector<size_t> pred(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i)
    pred[i] = argmax(infer_float(spec, w, inputs[i]));
  return pred;
}

// Runs inference across a precision range and records, per precision, how
// well the quantized predictions track the float reference and which
// failure mode showed up.  The fixed-point engine stands in for the
// encrypted evaluation by default; with `encrypted` the full three-party
// protocol runs on up to `sample` items per precision.
inline SweepReport sweep_precision(const ModelSpec& spec, const ModelWeights& w,
                                   const std::vector<std::vector<double>>& inputs,
                                   const SweepOptions& opt = {}) {
  if (inputs.empty()) throw ShapeError("precision sweep needs at least one input");
  if (opt.pmin < 1 || opt.pmax > 16 || opt.pmin > opt.pmax)
    throw ShapeError("precision range must sit inside [1, 16]");

  size_t n = inputs.size();
  if (opt.encrypted && opt.sample > 0 && opt.sample < n) n = opt.sample;
  std::vector<std::vector<double>> subset(inputs.begin(),
                                          inputs.begin() + static_cast<long>(n));
  std::vector<size_t> reference = float_predictions(spec, w, subset);

  SweepReport report;
  report.word_bits = opt.word_bits;
  report.encrypted = opt.encrypted;

  for (int p = opt.pmin; p <= opt.pmax; ++p) {
    SweepRow row;
    row.precision = p;
    row.total = n;
    row.predicted.assign(n, -1);
    bool overflowed = false;

    if (!opt.encrypted) {
      FixedCodec codec(opt.word_bits, p);
      bool quantized = true;
      QuantizedModel q;
      try {
        q = quantize_weights(spec, w, codec);
      } catch (const OverflowError&) {
        quantized = false;
        overflowed = true;
      }
      for (size_t i = 0; quantized && i < n; ++i) {
        try {
          std::vector<uint64_t> x(inputs[i].size());
          for (size_t j = 0; j < x.size(); ++j) x[j] = codec.encode(inputs[i][j]);
          std::vector<uint64_t> logits = infer_fixed(spec, q, codec, x);
          row.predicted[i] = static_cast<int>(argmax_fixed(codec.ring, logits));
        } catch (const OverflowError&) {
          overflowed = true;
        }
      }
    } else {
      ServerState st(spec, w, 1 << 30, opt.seed);
      DealerState dealer(opt.seed + 0x6465616c);
      for (size_t i = 0; i < n; ++i) {
        ClientConfig cfg;
        cfg.word_bits = opt.word_bits;
        cfg.precision = p;
        cfg.session = "sweep-p" + std::to_string(p) + "-i" + std::to_string(i);
        cfg.seed = opt.seed + i;
        try {
          InferenceResult res = inproc_infer(st, dealer, cfg, inputs[i]);
          row.predicted[i] = static_cast<int>(res.predicted);
        } catch (const OverflowError&) {
          overflowed = true;
        } catch (const AbortError& e) {
          if (std::string(e.what()).find("Overflow") == std::string::npos) throw;
          overflowed = true;
        }
      }
    }

    for (size_t i = 0; i < n; ++i)
      if (row.predicted[i] == static_cast<int>(reference[i])) ++row.matched;
    if (overflowed)
      row.status = SweepStatus::Overflow;
    else if (row.matched < row.total)
      row.status = SweepStatus::QuantizationMismatch;
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline std::string sweep_to_csv(const SweepReport& report) {
  std::ostringstream os;
  os << "# sinfer sweep v1 word_bits=" << report.word_bits
     << " engine=" << (report.encrypted ? "encrypted" : "fixed-point") << "\n";
  os << "precision,total,matched,status,predicted\n";
  for (const SweepRow& r : report.rows) {
    os << r.precision << "," << r.total << "," << r.matched << ","
       << sweep_status_name(r.status) << ",";
    for (size_t i = 0; i < r.predicted.size(); ++i) {
      if (i) os << ";";
      os << r.predicted[i];
    }
    os << "\n";
  }
  return os.str();
}

// ---- timing benchmark ----

struct BenchRow {
  std::string transport;
  size_t items = 0;
  double mean_ms = 0;
  double matching = 0;
  PhaseTimings phases;
};

struct BenchOptions {
  int precision = 4;
  int word_bits = 64;
  size_t items = 0;
  uint64_t seed = 1;
  bool local = true;
  bool tcp = true;
};

// Times plaintext float inference against the encrypted protocol over
// in-process queues and over TCP loopback, reporting per-item means, the
// agreement of each engine's predictions with the float reference, and
// the per-phase split of the encrypted runs.
inline std::vector<BenchRow> bench(const ModelSpec& spec, const ModelWeights& w,
                                   const std::vector<std::vector<double>>& inputs,
                                   const BenchOptions& opt = {}) {
  if (inputs.empty()) throw ShapeError("benchmark needs at least one input");
  size_t n = inputs.size();
  if (opt.items > 0 && opt.items < n) n = opt.items;

  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  std::vector<size_t> reference(n);
  std::vector<BenchRow> rows;

  {
    BenchRow row;
    row.transport = "plaintext";
    row.items = n;
    auto t0 = clock::now();
    for (size_t i = 0; i < n; ++i)
      reference[i] = argmax(infer_float(spec, w, inputs[i]));
    row.mean_ms = ms_since(t0) / static_cast<double>(n);
    row.matching = 1.0;
    rows.push_back(row);
  }

  auto accumulate = [&](BenchRow& row, const InferenceResult& res) {
    row.phases.preprocessing_ms += res.timings.preprocessing_ms;
    row.phases.upload_ms += res.timings.upload_ms;
    row.phases.online_ms += res.timings.online_ms;
    row.phases.reveal_ms += res.timings.reveal_ms;
  };
  auto finish = [&](BenchRow& row, const std::vector<size_t>& pred, double total_ms) {
    row.items = n;
    row.mean_ms = total_ms / static_cast<double>(n);
    row.matching = matching_rate(pred, reference);
    row.phases.preprocessing_ms /= static_cast<double>(n);
    row.phases.upload_ms /= static_cast<double>(n);
    row.phases.online_ms /= static_cast<double>(n);
    row.phases.reveal_ms /= static_cast<double>(n);
  };

  if (opt.local) {
    BenchRow row;
    row.transport = "local";
    ServerState st(spec, w, 1 << 30, opt.seed);
    DealerState dealer(opt.seed + 0x6c6f63);
    std::vector<size_t> pred(n);
    auto t0 = clock::now();
    for (size_t i = 0; i < n; ++i) {
      ClientConfig cfg;
      cfg.word_bits = opt.word_bits;
      cfg.precision = opt.precision;
      cfg.session = "bench-local-" + std::to_string(i);
      cfg.seed = opt.seed + i;
      InferenceResult res = inproc_infer(st, dealer, cfg, inputs[i]);
      pred[i] = res.predicted;
      accumulate(row, res);
    }
    finish(row, pred, ms_since(t0));
    rows.push_back(row);
  }

  if (opt.tcp) {
    BenchRow row;
    row.transport = "tcp";
    DealerDaemon dealer(0, opt.seed + 0x746370);
    ServerDaemon server(0, spec, w, 1 << 30, opt.seed, "127.0.0.1", dealer.port());
    std::vector<size_t> pred(n);
    auto t0 = clock::now();
    for (size_t i = 0; i < n; ++i) {
      ClientConfig cfg;
      cfg.word_bits = opt.word_bits;
      cfg.precision = opt.precision;
      cfg.session = "bench-tcp-" + std::to_string(i);
      cfg.seed = opt.seed + i;
      InferenceResult res = tcp_infer("127.0.0.1", server.port(), "127.0.0.1",
                                      dealer.port(), cfg, inputs[i]);
      pred[i] = res.predicted;
      accumulate(row, res);
    }
    finish(row, pred, ms_since(t0));
    server.stop();
    dealer.stop();
    rows.push_back(row);
  }

  return rows;
}

inline std::string bench_to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "# sinfer bench v1\n";
  os << "transport,items,mean_ms,matching,preprocessing_ms,upload_ms,online_ms,reveal_ms\n";
  char buf[256];
  for (const BenchRow& r : rows) {
    snprintf(buf, sizeof buf, "%s,%zu,%.3f,%.4f,%.3f,%.3f,%.3f,%.3f\n", r.transport.c_str(),
             r.items, r.mean_ms, r.matching, r.phases.preprocessing_ms, r.phases.upload_ms,
             r.phases.online_ms, r.phases.reveal_ms);
    os << buf;
  }
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << content;
  if (!f) throw FormatError("failed writing " + path);
}

}  // namespace sinfer
