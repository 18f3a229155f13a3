#include <atomic>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "sinfer/harness.hpp"
#include "sinfer/iot.hpp"
#include "sinfer/metrics.hpp"
#include "sinfer/model.hpp"
#include "sinfer/protocol.hpp"

namespace {

using namespace sinfer;

std::atomic<bool> g_stop{false};

void handle_stop(int) { g_stop.store(true); }

void wait_for_stop() {
  std::signal(SIGINT, handle_stop);
  std::signal(SIGTERM, handle_stop);
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  std::printf("stopping\n");
}

struct Addr {
  std::string host;
  uint16_t port = 0;
};

// host:port with numeric IPv4 hosts; "localhost" is accepted as an alias.
Addr parse_addr(const std::string& s, bool listen) {
  size_t pos = s.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == s.size())
    throw FormatError("address must be host:port, got \"" + s + "\"");
  Addr a;
  a.host = s.substr(0, pos);
  if (a.host == "localhost") a.host = "127.0.0.1";
  unsigned long port = 0;
  try {
    size_t used = 0;
    port = std::stoul(s.substr(pos + 1), &used);
    if (used != s.size() - pos - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw FormatError("bad port in address \"" + s + "\"");
  }
  if (port > 65535) throw FormatError("port out of range in \"" + s + "\"");
  a.port = static_cast<uint16_t>(port);
  if (listen) {
    if (a.host != "127.0.0.1")
      throw FormatError("only loopback listen addresses are supported");
  } else if (a.port == 0) {
    throw FormatError("cannot connect to port 0");
  }
  return a;
}

// Decimal, or hexadecimal with an 0x prefix.
uint64_t parse_seed(const std::string& s) {
  try {
    size_t used = 0;
    uint64_t v;
    if (s.size() > 2 && (s[1] == 'x' || s[1] == 'X') && s[0] == '0')
      v = std::stoull(s.substr(2), &used, 16), used += 2;
    else
      v = std::stoull(s, &used, 10);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad seed \"" + s + "\" (decimal or 0x-hex)");
  }
}

uint64_t random_seed() {
  std::random_device rd;
  return (static_cast<uint64_t>(rd()) << 32) ^ rd();
}

std::vector<WindowImage> load_data(const std::string& path) {
  std::vector<WindowImage> images = load_images(path);
  std::printf("loaded %zu images of 3x%zux%zu from %s\n", images.size(), images[0].h,
              images[0].w, path.c_str());
  return images;
}

void check_model_fits(const ModelSpec& spec, const WindowImage& img) {
  if (spec.in_c != 3 || spec.in_h != img.h || spec.in_w != img.w)
    throw ShapeError("model expects " + std::to_string(spec.in_c) + "x" +
                     std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w) +
                     " input but the images are 3x" + std::to_string(img.h) + "x" +
                     std::to_string(img.w));
}

std::vector<std::vector<double>> image_inputs(const std::vector<WindowImage>& images) {
  std::vector<std::vector<double>> inputs;
  inputs.reserve(images.size());
  for (const WindowImage& img : images) inputs.push_back(img.chw());
  return inputs;
}

const char* class_name(size_t k) {
  return k < kClassNames.size() ? kClassNames[k] : "?";
}

// Label list: an image file's stored labels, or a text file with one label
// per line, each a class index or a class name.
std::vector<size_t> load_labels(const std::string& path) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw FormatError("cannot read " + path);
    char magic[4] = {};
    probe.read(magic, 4);
    if (probe.gcount() == 4 && std::memcmp(magic, "SIMG", 4) == 0) {
      std::vector<size_t> out;
      for (const WindowImage& img : load_images(path)) out.push_back(img.label);
      return out;
    }
  }
  std::ifstream f(path);
  std::vector<size_t> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos || line[start] == '#') continue;
    std::string tok = line.substr(start);
    int label = label_from_name(tok);
    if (label < 0) {
      try {
        size_t used = 0;
        unsigned long v = std::stoul(tok, &used);
        if (used != tok.size() || v >= kClassNames.size()) throw std::invalid_argument("");
        label = static_cast<int>(v);
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": unknown label \"" +
                          tok + "\"");
      }
    }
    out.push_back(static_cast<size_t>(label));
  }
  if (out.empty()) throw FormatError(path + " holds no labels");
  return out;
}

void write_labels(const std::string& path, const std::vector<size_t>& labels) {
  std::string text;
  for (size_t k : labels) {
    text += class_name(k);
    text += '\n';
  }
  write_text_file(path, text);
  std::printf("wrote %zu labels to %s\n", labels.size(), path.c_str());
}

int cmd_gen_model(const std::string& arch, size_t classes, const std::string& seed,
                  double scale, const std::string& out) {
  ModelSpec spec = arch == "resnet50" ? resnet50_spec(classes) : desk_spec(classes);
  ModelWeights w = gen_weights(spec, parse_seed(seed), scale);
  write_model(out, spec, w);
  size_t params = 0;
  for (const auto& [name, t] : w.t) params += t.numel();
  std::printf("wrote %s: arch %s, input %zux%zux%zu, %zu classes, %zu parameters, digest 0x%08x\n",
              out.c_str(), arch.c_str(), spec.in_c, spec.in_h, spec.in_w, spec.classes,
              params, model_digest(spec, w));
  return 0;
}

int cmd_gen_data(size_t rows, const std::string& seed, const std::string& out) {
  SensorTable table = gen_synthetic_stream(parse_seed(seed), rows);
  save_csv(out, table);
  std::vector<size_t> counts(kClassNames.size(), 0);
  for (const SensorRow& r : table.rows) ++counts[r.label];
  std::printf("wrote %zu sensor rows to %s\n", table.rows.size(), out.c_str());
  for (size_t k = 0; k < counts.size(); ++k)
    if (counts[k]) std::printf("  %-10s %zu\n", class_name(k), counts[k]);
  return 0;
}

int cmd_encode_data(const std::string& input, size_t height, size_t width,
                    const std::string& out) {
  SensorTable table = load_csv(input);
  std::vector<WindowImage> images = encode_windows(table.rows, height, width);
  save_images(out, images);
  std::printf("encoded %zu rows into %zu windows of 3x%zux%zu, wrote %s\n",
              table.rows.size(), images.size(), height, width, out.c_str());
  return 0;
}

int cmd_infer_plain(const std::string& model, const std::string& data, bool fixed,
                    int precision, int word_bits, size_t limit, const std::string& pred_out) {
  auto [spec, w] = read_model(model);
  std::vector<WindowImage> images = load_data(data);
  check_model_fits(spec, images[0]);
  size_t n = images.size();
  if (limit > 0 && limit < n) n = limit;

  QuantizedModel q;
  FixedCodec codec(word_bits, precision);
  if (fixed) q = quantize_weights(spec, w, codec);

  std::vector<size_t> pred(n);
  size_t matched = 0;
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> x = images[i].chw();
    if (fixed) {
      std::vector<uint64_t> enc(x.size());
      for (size_t j = 0; j < x.size(); ++j) enc[j] = codec.encode(x[j]);
      pred[i] = argmax_fixed(codec.ring, infer_fixed(spec, q, codec, enc));
    } else {
      pred[i] = argmax(infer_float(spec, w, x));
    }
    bool ok = pred[i] == images[i].label;
    matched += ok;
    std::printf("item %zu: %s (class %zu)%s\n", i, class_name(pred[i]), pred[i],
                ok ? "" : " *");
  }
  std::printf("agreement with stored labels: %zu/%zu (%.1f%%)\n", matched, n,
              100.0 * static_cast<double>(matched) / static_cast<double>(n));
  if (!pred_out.empty()) write_labels(pred_out, pred);
  return 0;
}

int cmd_dealer(const std::string& listen, const std::string& seed) {
  Addr a = parse_addr(listen, true);
  uint64_t s = seed.empty() ? random_seed() : parse_seed(seed);
  DealerDaemon daemon(a.port, s);
  std::printf("dealer listening on 127.0.0.1:%u\n", daemon.port());
  std::fflush(stdout);
  wait_for_stop();
  return 0;
}

int cmd_serve(const std::string& model, const std::string& listen, const std::string& dealer,
              int quota, const std::string& seed) {
  auto [spec, w] = read_model(model);
  Addr la = parse_addr(listen, true);
  Addr da = parse_addr(dealer, false);
  uint64_t s = seed.empty() ? random_seed() : parse_seed(seed);
  ServerDaemon daemon(la.port, std::move(spec), std::move(w), quota, s, da.host, da.port);
  std::printf("serving model digest 0x%08x on 127.0.0.1:%u, dealer %s:%u, quota %d per client\n",
              daemon.model_digest(), daemon.port(), da.host.c_str(), da.port, quota);
  std::fflush(stdout);
  wait_for_stop();
  return 0;
}

int cmd_client(const std::string& data, const std::string& server, const std::string& dealer,
               int precision, int word_bits, const std::string& token,
               const std::string& session, const std::string& seed, size_t limit,
               const std::string& report, const std::string& pred_out) {
  std::vector<WindowImage> images = load_data(data);
  Addr sa = parse_addr(server, false);
  Addr da = parse_addr(dealer, false);
  uint64_t seed0 = seed.empty() ? random_seed() : parse_seed(seed);
  size_t n = images.size();
  if (limit > 0 && limit < n) n = limit;

  std::string csv = "# sinfer client v1, word_bits=" + std::to_string(word_bits) +
                    ", precision=" + std::to_string(precision) + "\n";
  csv += "item,predicted,class,label,rounds,preprocessing_ms,upload_ms,online_ms,reveal_ms,total_ms\n";

  std::vector<size_t> pred(n);
  size_t matched = 0;
  PhaseTimings sum;
  for (size_t i = 0; i < n; ++i) {
    ClientConfig cfg;
    cfg.word_bits = word_bits;
    cfg.precision = precision;
    cfg.token = token;
    cfg.session = session + "-" + std::to_string(i);
    cfg.seed = seed0 + i;
    InferenceResult res = tcp_infer(sa.host, sa.port, da.host, da.port, cfg, images[i].chw());
    pred[i] = res.predicted;
    bool ok = res.predicted == images[i].label;
    matched += ok;
    std::printf("item %zu: %s (class %zu) in %.1f ms over %zu rounds%s\n", i,
                class_name(res.predicted), res.predicted, res.timings.total_ms(),
                res.rounds, ok ? "" : " *");
    sum.preprocessing_ms += res.timings.preprocessing_ms;
    sum.upload_ms += res.timings.upload_ms;
    sum.online_ms += res.timings.online_ms;
    sum.reveal_ms += res.timings.reveal_ms;
    char line[256];
    std::snprintf(line, sizeof line, "%zu,%zu,%s,%u,%zu,%.3f,%.3f,%.3f,%.3f,%.3f\n", i,
                  res.predicted, class_name(res.predicted),
                  static_cast<unsigned>(images[i].label), res.rounds,
                  res.timings.preprocessing_ms, res.timings.upload_ms,
                  res.timings.online_ms, res.timings.reveal_ms, res.timings.total_ms());
    csv += line;
  }
  double dn = static_cast<double>(n);
  std::printf("agreement with stored labels: %zu/%zu (%.1f%%)\n", matched, n,
              100.0 * static_cast<double>(matched) / dn);
  std::printf("mean phases (ms): preprocessing %.1f, upload %.1f, online %.1f, reveal %.1f\n",
              sum.preprocessing_ms / dn, sum.upload_ms / dn, sum.online_ms / dn,
              sum.reveal_ms / dn);
  if (!report.empty()) {
    write_text_file(report, csv);
    std::printf("wrote timing report to %s\n", report.c_str());
  }
  if (!pred_out.empty()) write_labels(pred_out, pred);
  return 0;
}

int cmd_sweep(const std::string& model, const std::string& data, const SweepOptions& opt,
              const std::string& seed, const std::string& out) {
  auto [spec, w] = read_model(model);
  std::vector<WindowImage> images = load_data(data);
  check_model_fits(spec, images[0]);
  SweepOptions o = opt;
  o.seed = parse_seed(seed);
  SweepReport report = sweep_precision(spec, w, image_inputs(images), o);
  std::string csv = sweep_to_csv(report);
  if (out.empty()) {
    std::fputs(csv.c_str(), stdout);
    return 0;
  }
  for (const SweepRow& r : report.rows)
    std::printf("p=%-2d %-21s matched %zu/%zu\n", r.precision, sweep_status_name(r.status),
                r.matched, r.total);
  write_text_file(out, csv);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_metrics(const std::string& pred_path, const std::string& truth_path,
                bool show_confusion, bool show_binary) {
  std::vector<size_t> pred = load_labels(pred_path);
  std::vector<size_t> truth = load_labels(truth_path);
  std::printf("items: %zu\n", pred.size());
  std::printf("matching rate: %.1f%%\n", 100.0 * matching_rate(pred, truth));
  ConfusionMatrix cm = confusion(pred, truth);
  if (show_confusion) {
    std::printf("%-12s", "truth\\pred");
    for (size_t p = 0; p < cm.classes; ++p) std::printf(" %10s", class_name(p));
    std::printf("\n");
    for (size_t t = 0; t < cm.classes; ++t) {
      std::printf("%-12s", class_name(t));
      for (size_t p = 0; p < cm.classes; ++p) std::printf(" %10zu", cm.at(t, p));
      std::printf("\n");
    }
  }
  if (show_binary) {
    BinaryMetrics m = binary_metrics(cm);
    std::printf("binary accuracy: %.1f%%\n", m.accuracy * 100.0);
    std::printf("attack TPR: %s\n", percent_or_na(m.tpr, m.tpr_defined).c_str());
    std::printf("false positive rate: %s\n", percent_or_na(m.fpr, m.fpr_defined).c_str());
  }
  return 0;
}

int cmd_bench(const std::string& model, const std::string& data, const std::string& transports,
              BenchOptions opt, const std::string& seed, const std::string& out) {
  auto [spec, w] = read_model(model);
  std::vector<WindowImage> images = load_data(data);
  check_model_fits(spec, images[0]);
  opt.seed = parse_seed(seed);
  opt.local = opt.tcp = false;
  std::stringstream ss(transports);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part == "local")
      opt.local = true;
    else if (part == "tcp")
      opt.tcp = true;
    else
      throw FormatError("unknown transport \"" + part + "\" (expected local,tcp)");
  }
  std::vector<BenchRow> rows = bench(spec, w, image_inputs(images), opt);
  for (const BenchRow& r : rows)
    std::printf("%-10s %zu items, %10.3f ms/item, matching %.1f%%\n", r.transport.c_str(),
                r.items, r.mean_ms, r.matching * 100.0);
  if (!out.empty()) {
    write_text_file(out, bench_to_csv(rows));
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"three-party private CNN inference over additive shares"};
  app.require_subcommand(1);

  std::string arch = "desk", model, data, input, out, seed_str = "1", seed_opt;
  std::string listen, dealer_addr, server_addr, report, pred_out, truth_path;
  std::string token = "client", session = "run", strategy = "miss3", transports = "local,tcp";
  size_t classes = 8, rows = 4000, height = 224, width = 224, limit = 0;
  double scale = 1.0;
  int precision = 4, word_bits = 64, quota = 16, quiet_rc = 0;
  bool fixed = false, show_confusion = false, show_binary = false;
  SweepOptions sweep_opt;
  BenchOptions bench_opt;

  CLI::App* gm = app.add_subcommand("gen-model", "generate a synthetic model file");
  gm->add_option("--arch", arch, "architecture")->check(CLI::IsMember({"desk", "resnet50"}));
  gm->add_option("--classes", classes, "output classes");
  gm->add_option("--seed", seed_str, "weight seed");
  gm->add_option("--scale", scale, "weight magnitude scale");
  gm->add_option("--out", out, "model file to write")->required();
  gm->callback([&] { quiet_rc = cmd_gen_model(arch, classes, seed_str, scale, out); });

  CLI::App* gd = app.add_subcommand("gen-data", "generate a synthetic sensor stream CSV");
  gd->add_option("--rows", rows, "sensor readings to generate");
  gd->add_option("--seed", seed_str, "stream seed");
  gd->add_option("--out", out, "CSV file to write")->required();
  gd->callback([&] { quiet_rc = cmd_gen_data(rows, seed_str, out); });

  CLI::App* ed = app.add_subcommand("encode-data", "render a sensor CSV as window images");
  ed->add_option("--input", input, "sensor CSV")->required();
  ed->add_option("--height", height, "window height (rows per image)");
  ed->add_option("--width", width, "image width");
  ed->add_option("--strategy", strategy, "imputation strategy")
      ->check(CLI::IsMember({"miss3"}));
  ed->add_option("--out", out, "image file to write")->required();
  ed->callback([&] { quiet_rc = cmd_encode_data(input, height, width, out); });

  CLI::App* ip = app.add_subcommand("infer-plain", "run plaintext inference on an image file");
  ip->add_option("--model", model, "model file")->required();
  ip->add_option("--data", data, "image file")->required();
  ip->add_flag("--fixed", fixed, "use the fixed-point engine instead of float");
  ip->add_option("--precision", precision, "decimal digits for --fixed");
  ip->add_option("--word-bits", word_bits, "ring word size for --fixed");
  ip->add_option("--limit", limit, "run at most this many items");
  ip->add_option("--pred", pred_out, "write predicted labels to this file");
  ip->callback([&] {
    quiet_rc = cmd_infer_plain(model, data, fixed, precision, word_bits, limit, pred_out);
  });

  CLI::App* dl = app.add_subcommand("dealer", "run the correlated-randomness dealer");
  dl->add_option("--listen", listen, "host:port to listen on")->required();
  dl->add_option("--seed", seed_opt, "material seed (default random)");
  dl->callback([&] { quiet_rc = cmd_dealer(listen, seed_opt); });

  CLI::App* sv = app.add_subcommand("serve", "run the model owner");
  sv->add_option("--model", model, "model file")->required();
  sv->add_option("--listen", listen, "host:port to listen on")->required();
  sv->add_option("--dealer", dealer_addr, "dealer host:port")->required();
  sv->add_option("--quota", quota, "inferences allowed per client token");
  sv->add_option("--seed", seed_opt, "share-randomness seed (default random)");
  sv->callback([&] { quiet_rc = cmd_serve(model, listen, dealer_addr, quota, seed_opt); });

  CLI::App* cl = app.add_subcommand("client", "run inferences as the data owner");
  cl->add_option("--data", data, "image file")->required();
  cl->add_option("--server", server_addr, "model owner host:port")->required();
  cl->add_option("--dealer", dealer_addr, "dealer host:port")->required();
  cl->add_option("--precision", precision, "decimal digits");
  cl->add_option("--word-bits", word_bits, "ring word size");
  cl->add_option("--token", token, "client identity presented for the quota");
  cl->add_option("--session", session, "session id prefix");
  cl->add_option("--seed", seed_opt, "input-share seed (default random)");
  cl->add_option("--limit", limit, "run at most this many items");
  cl->add_option("--report", report, "write a per-item timing CSV to this file");
  cl->add_option("--pred", pred_out, "write predicted labels to this file");
  cl->callback([&] {
    quiet_rc = cmd_client(data, server_addr, dealer_addr, precision, word_bits, token,
                          session, seed_opt, limit, report, pred_out);
  });

  CLI::App* sw = app.add_subcommand("sweep-precision",
                                    "compare quantized and float predictions per precision");
  sw->add_option("--model", model, "model file")->required();
  sw->add_option("--data", data, "image file")->required();
  sw->add_option("--pmin", sweep_opt.pmin, "lowest precision");
  sw->add_option("--pmax", sweep_opt.pmax, "highest precision");
  sw->add_option("--word-bits", sweep_opt.word_bits, "ring word size");
  sw->add_flag("--encrypted", sweep_opt.encrypted,
               "run the three-party protocol instead of the fixed-point proxy");
  sw->add_option("--sample", sweep_opt.sample, "items per precision under --encrypted");
  sw->add_option("--seed", seed_str, "session seed");
  sw->add_option("--out", out, "write the CSV here instead of stdout");
  sw->callback([&] { quiet_rc = cmd_sweep(model, data, sweep_opt, seed_str, out); });

  CLI::App* mt = app.add_subcommand("metrics", "score predictions against ground truth");
  mt->add_option("--pred", pred_out, "predicted labels (text or image file)")->required();
  mt->add_option("--truth", truth_path, "true labels (text or image file)")->required();
  mt->add_flag("--confusion", show_confusion, "print the confusion matrix");
  mt->add_flag("--binary", show_binary, "print normal-vs-attack metrics");
  mt->callback([&] {
    quiet_rc = cmd_metrics(pred_out, truth_path, show_confusion, show_binary);
  });

  CLI::App* bn = app.add_subcommand("bench", "time plaintext against encrypted transports");
  bn->add_option("--model", model, "model file")->required();
  bn->add_option("--data", data, "image file")->required();
  bn->add_option("--transports", transports, "comma list from: local,tcp");
  bn->add_option("--items", bench_opt.items, "run at most this many items");
  bn->add_option("--precision", bench_opt.precision, "decimal digits");
  bn->add_option("--word-bits", bench_opt.word_bits, "ring word size");
  bn->add_option("--seed", seed_str, "session seed");
  bn->add_option("--out", out, "write the CSV here");
  bn->callback([&] {
    quiet_rc = cmd_bench(model, data, transports, bench_opt, seed_str, out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sinfer: error: %s\n", e.what());
    return 1;
  }
  return quiet_rc;
}
