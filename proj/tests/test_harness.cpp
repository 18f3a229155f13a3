#include <doctest.h>

#include <cmath>

#include <sinfer/harness.hpp>

using namespace sinfer;

namespace {

ModelSpec conv_spec() {
  return parse_arch_text(
      "arch v1\n"
      "input 3 8 8\n"
      "classes 4\n"
      "conv out 4 k 3 3 stride 1 pad 1\n"
      "relu\n"
      "maxpool k 2 stride 2 pad 0\n"
      "gap\n"
      "dense out 4\n");
}

std::vector<std::vector<double>> wave_batch(size_t items, size_t n) {
  std::vector<std::vector<double>> out(items, std::vector<double>(n));
  for (size_t i = 0; i < items; ++i)
    for (size_t j = 0; j < n; ++j)
      out[i][j] = 0.8 * std::sin(0.29 * static_cast<double>(j) + 0.7 * static_cast<double>(i));
  return out;
}

// Two-logit passthrough with weight magnitude 1000: inputs near a tie get
// rounded together at p=1, and the products leave the safe range once the
// scale factor is large enough.
ModelSpec gate_spec() {
  return parse_arch_text(
      "arch v1\n"
      "input 2 1 1\n"
      "classes 2\n"
      "gap\n"
      "dense out 2\n");
}

ModelWeights gate_weights() {
  ModelWeights w;
  w.t["l1.weight"] = Tensor<double>({2, 2}, {1000.0, 0.0, 0.0, 1000.0});
  w.t["l1.bias"] = Tensor<double>({2}, {0.0, 0.0});
  return w;
}

}  // namespace

TEST_CASE("the sweep shows mismatch, a clean band, and overflow in order") {
  ModelSpec spec = gate_spec();
  ModelWeights w = gate_weights();
  std::vector<std::vector<double>> inputs = {{0.51, 0.54}, {0.23, 0.29}};

  SweepReport report = sweep_precision(spec, w, inputs, {});
  REQUIRE(report.rows.size() == 16);

  CHECK(report.rows[0].precision == 1);
  CHECK(report.rows[0].status == SweepStatus::QuantizationMismatch);
  CHECK(report.rows[0].matched == 1);
  CHECK(report.rows[0].predicted[0] == 0);
  CHECK(report.rows[0].predicted[1] == 1);

  size_t first_overflow = 16;
  size_t clean = 0;
  for (size_t i = 0; i < report.rows.size(); ++i) {
    if (report.rows[i].status == SweepStatus::Overflow) {
      first_overflow = std::min(first_overflow, i);
      CHECK(report.rows[i].matched < report.rows[i].total);
    }
    if (report.rows[i].status == SweepStatus::Ok) {
      ++clean;
      CHECK(report.rows[i].matched == report.rows[i].total);
    }
  }
  REQUIRE(first_overflow < 16);
  CHECK(first_overflow > 1);
  CHECK(clean >= 3);
  for (size_t i = first_overflow; i < report.rows.size(); ++i)
    CHECK(report.rows[i].status == SweepStatus::Overflow);

  SweepReport again = sweep_precision(spec, w, inputs, {});
  CHECK(report == again);
}

TEST_CASE("a well-scaled model has a clean matching band") {
  ModelSpec spec = conv_spec();
  ModelWeights w = gen_weights(spec, 5);
  auto inputs = wave_batch(4, 3 * 8 * 8);

  SweepOptions opt;
  opt.pmin = 3;
  opt.pmax = 8;
  SweepReport report = sweep_precision(spec, w, inputs, opt);
  REQUIRE(report.rows.size() == 6);
  size_t clean = 0;
  for (const SweepRow& r : report.rows)
    if (r.status == SweepStatus::Ok && r.matched == r.total) ++clean;
  CHECK(clean >= 4);
}

TEST_CASE("the encrypted sweep agrees with the fixed-point proxy") {
  ModelSpec spec = conv_spec();
  ModelWeights w = gen_weights(spec, 6);
  auto inputs = wave_batch(3, 3 * 8 * 8);

  SweepOptions proxy_opt;
  proxy_opt.pmin = 4;
  proxy_opt.pmax = 5;
  proxy_opt.sample = 2;
  proxy_opt.encrypted = false;
  SweepOptions enc_opt = proxy_opt;
  enc_opt.encrypted = true;

  SweepReport enc = sweep_precision(spec, w, inputs, enc_opt);
  REQUIRE(enc.rows.size() == 2);
  CHECK(enc.rows[0].total == 2);

  SweepOptions trimmed = proxy_opt;
  SweepReport proxy = sweep_precision(
      spec, w, std::vector<std::vector<double>>(inputs.begin(), inputs.begin() + 2), trimmed);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(enc.rows[i].predicted == proxy.rows[i].predicted);
    CHECK(enc.rows[i].matched == proxy.rows[i].matched);
    CHECK(enc.rows[i].status == proxy.rows[i].status);
  }
}

TEST_CASE("sweep rejects empty input sets and bad ranges") {
  ModelSpec spec = gate_spec();
  ModelWeights w = gate_weights();
  CHECK_THROWS_AS(sweep_precision(spec, w, {}, {}), ShapeError);
  SweepOptions bad;
  bad.pmin = 0;
  CHECK_THROWS_AS(sweep_precision(spec, w, {{0.1, 0.2}}, bad), ShapeError);
  bad.pmin = 4;
  bad.pmax = 17;
  CHECK_THROWS_AS(sweep_precision(spec, w, {{0.1, 0.2}}, bad), ShapeError);
}

TEST_CASE("sweep reports serialize to versioned csv") {
  ModelSpec spec = gate_spec();
  ModelWeights w = gate_weights();
  SweepReport report = sweep_precision(spec, w, {{0.51, 0.54}}, {});
  std::string csv = sweep_to_csv(report);
  CHECK(csv.find("# sinfer sweep v1") == 0);
  CHECK(csv.find("precision,total,matched,status,predicted") != std::string::npos);
  CHECK(csv.find("overflow") != std::string::npos);
  CHECK(csv.find("quantization-mismatch") != std::string::npos);

  size_t lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 2 + report.rows.size());
}

TEST_CASE("the benchmark ranks plaintext under encrypted and keeps agreement") {
  ModelSpec spec = conv_spec();
  ModelWeights w = gen_weights(spec, 7);
  auto inputs = wave_batch(2, 3 * 8 * 8);

  BenchOptions opt;
  opt.items = 2;
  std::vector<BenchRow> rows = bench(spec, w, inputs, opt);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].transport == "plaintext");
  CHECK(rows[1].transport == "local");
  CHECK(rows[2].transport == "tcp");

  for (const BenchRow& r : rows) {
    CHECK(r.items == 2);
    CHECK(r.mean_ms > 0);
    CHECK(r.matching == 1.0);
  }
  CHECK(rows[1].mean_ms > rows[0].mean_ms);
  CHECK(rows[2].mean_ms > rows[0].mean_ms);
  for (size_t i = 1; i < 3; ++i) {
    CHECK(rows[i].phases.preprocessing_ms > 0);
    CHECK(rows[i].phases.upload_ms > 0);
    CHECK(rows[i].phases.online_ms > 0);
    CHECK(rows[i].phases.reveal_ms > 0);
  }

  std::string csv = bench_to_csv(rows);
  CHECK(csv.find("# sinfer bench v1") == 0);
  CHECK(csv.find("transport,items,mean_ms,matching") != std::string::npos);
  CHECK(csv.find("plaintext,") != std::string::npos);
  CHECK(csv.find("tcp,") != std::string::npos);
}
