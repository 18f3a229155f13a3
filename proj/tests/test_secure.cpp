#include <doctest.h>

#include "party_harness.hpp"
#include "sinfer/dealer.hpp"
#include "sinfer/secure_tensor.hpp"

using namespace sinfer;

namespace {

ModelSpec flat_head_spec(size_t in_c, size_t units) {
  ModelSpec spec;
  spec.in_c = in_c;
  spec.in_h = 1;
  spec.in_w = 1;
  spec.classes = units;
  spec.layers.push_back({.kind = LayerKind::GlobalAvgPool, .input = -1});
  spec.layers.push_back({.kind = LayerKind::Dense, .input = 0, .units = units});
  validate_spec(spec);
  return spec;
}

std::vector<double> wave_input(size_t n, double amp) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i)
    x[i] = std::sin(0.37 * static_cast<double>(i)) * amp;
  return x;
}

// Runs both parties over an in-process channel and reconstructs the logits.
std::vector<uint64_t> run_secure(const ModelSpec& spec, const FixedCodec& codec,
                                 const QuantizedModel& q,
                                 const std::vector<uint64_t>& xe, uint64_t seed,
                                 size_t* rounds = nullptr) {
  PreprocessingPlan plan = plan_preprocessing(spec, codec.ring.bits, codec.precision);
  auto [mat0, mat1] = generate_material(plan, seed_from_u64(seed));

  Prg rng = Prg::from_seed(seed_from_u64(seed ^ 0xabcdef), 1);
  auto [w0, w1] = split_model_shares(q, rng);
  auto [x0, x1] = split_shares(codec.ring, xe, rng);

  LocalPair pair(codec.ring);
  LocalEnd e0(&pair, 0), e1(&pair, 1);
  std::vector<uint64_t> z0, z1;
  run_parties(
      [&] { z0 = secure_infer(spec, codec, 0, e0, w0, mat0, x0); },
      [&] { z1 = secure_infer(spec, codec, 1, e1, w1, mat1, x1); });
  if (rounds) *rounds = pair.rounds();
  return reconstruct(codec.ring, z0, z1);
}

}  // namespace

TEST_CASE("plan counts for the primitive layers") {
  // Dense over 4 inputs, 2 outputs: one 1x4 by 4x2 product, 8 triple
  // elements, one scale-down per output.
  ModelSpec dense = flat_head_spec(4, 2);
  PreprocessingPlan p = plan_preprocessing(dense, 64, 4);
  CHECK(p.layers[1].m * p.layers[1].k * p.layers[1].n == 8);
  CHECK(p.layers[1].trunc_units == 2);
  CHECK(p.layers[1].compare_units == 0);
  CHECK(p.layers[1].trunc_divisor == 10000);

  // A rectifier over a 2x2x1 map: one sign test per element.
  ModelSpec relu;
  relu.in_c = 1;
  relu.in_h = 2;
  relu.in_w = 2;
  relu.classes = 1;
  relu.layers.push_back({.kind = LayerKind::Relu, .input = -1});
  relu.layers.push_back({.kind = LayerKind::GlobalAvgPool, .input = 0});
  relu.layers.push_back({.kind = LayerKind::Dense, .input = 1, .units = 1});
  PreprocessingPlan pr = plan_preprocessing(relu, 64, 4);
  CHECK(pr.layers[0].compare_units == 4);
  CHECK(pr.layers[0].trunc_units == 0);

  // 2x2 stride-2 pooling over a 4x4x1 map: four windows, three pairwise
  // eliminations each.
  ModelSpec pool;
  pool.in_c = 1;
  pool.in_h = 4;
  pool.in_w = 4;
  pool.classes = 1;
  pool.layers.push_back({.kind = LayerKind::MaxPool, .input = -1, .k = 2,
                         .pool_stride = 2, .pool_pad = 0});
  pool.layers.push_back({.kind = LayerKind::GlobalAvgPool, .input = 0});
  pool.layers.push_back({.kind = LayerKind::Dense, .input = 1, .units = 1});
  PreprocessingPlan pp = plan_preprocessing(pool, 64, 4);
  CHECK(pp.layers[0].compare_units == 12);
}

TEST_CASE("desk model plan is deterministic and pinned") {
  ModelSpec spec = desk_spec();
  PreprocessingPlan plan = plan_preprocessing(spec, 64, 4);
  CHECK(plan == plan_preprocessing(spec, 64, 4));

  REQUIRE(plan.layers.size() == 7);
  CHECK(plan.layers[0].m == 1024);
  CHECK(plan.layers[0].k == 27);
  CHECK(plan.layers[0].n == 8);
  CHECK(plan.layers[0].trunc_units == 8192);
  CHECK(plan.layers[1].compare_units == 8192);
  CHECK(plan.layers[2].compare_units == 6144);
  CHECK(plan.layers[3].m == 256);
  CHECK(plan.layers[3].k == 72);
  CHECK(plan.layers[3].n == 16);
  CHECK(plan.layers[5].trunc_units == 16);
  CHECK(plan.layers[6].trunc_units == 8);
  CHECK(plan.total_trunc_units() == 12312);
  CHECK(plan.total_compare_units() == 18432);

  std::vector<uint8_t> bytes = plan_to_bytes(plan);
  CHECK(plan_from_bytes(bytes.data(), bytes.size()) == plan);
  CHECK(plan_to_bytes(plan_preprocessing(spec, 64, 4)) == bytes);

  PreprocessingPlan other = plan_preprocessing(spec, 64, 5);
  CHECK(!(other == plan));
}

TEST_CASE("plans reject unfolded normalization") {
  ModelSpec spec = resnet50_spec(2);
  CHECK_THROWS_AS(plan_preprocessing(spec, 64, 4), ShapeError);
  ModelWeights w = gen_weights(spec, 1, 0.05);
  fold_batchnorm(spec, w);
  PreprocessingPlan plan = plan_preprocessing(spec, 64, 4);
  CHECK(plan.layers.size() == 174);
}

TEST_CASE("material generation is seed-deterministic") {
  ModelSpec spec = flat_head_spec(3, 2);
  PreprocessingPlan plan = plan_preprocessing(spec, 64, 3);
  auto [a0, a1] = generate_material(plan, seed_from_u64(400));
  auto [b0, b1] = generate_material(plan, seed_from_u64(400));
  auto [c0, c1] = generate_material(plan, seed_from_u64(401));

  auto bytes = [](const std::vector<LayerMaterial>& mats) {
    std::vector<uint8_t> out;
    for (const LayerMaterial& m : mats) serialize_layer_material(m, out);
    return out;
  };
  CHECK(bytes(a0) == bytes(b0));
  CHECK(bytes(a1) == bytes(b1));
  CHECK(bytes(a0) != bytes(c0));
  CHECK(bytes(a0) != bytes(a1));
}

TEST_CASE("material chunks roundtrip through bytes") {
  ModelSpec spec = desk_spec(2);
  spec.in_h = spec.in_w = 8;
  validate_spec(spec);
  PreprocessingPlan plan = plan_preprocessing(spec, 64, 3);
  auto [m0, m1] = generate_material(plan, seed_from_u64(77));

  for (size_t i = 0; i < m0.size(); ++i) {
    std::vector<uint8_t> bytes;
    serialize_layer_material(m0[i], bytes);
    size_t consumed = 0;
    LayerMaterial back = parse_layer_material(bytes.data(), bytes.size(), &consumed);
    CHECK(consumed == bytes.size());
    std::vector<uint8_t> again;
    serialize_layer_material(back, again);
    CHECK(again == bytes);
  }

  std::vector<uint8_t> bytes;
  serialize_layer_material(m0[0], bytes);
  CHECK_THROWS_AS(parse_layer_material(bytes.data(), bytes.size() / 2, nullptr),
                  FormatError);
}

TEST_CASE("secure dense head matches the plain fixed-point engine") {
  ModelSpec spec = flat_head_spec(5, 3);
  ModelWeights w = gen_weights(spec, 31);
  FixedCodec codec(64, 4);
  QuantizedModel q = quantize_weights(spec, w, codec);

  std::vector<double> x = wave_input(5, 0.9);
  std::vector<uint64_t> xe(x.size());
  for (size_t i = 0; i < x.size(); ++i) xe[i] = codec.encode(x[i]);

  std::vector<uint64_t> want = infer_fixed(spec, q, codec, xe);
  std::vector<uint64_t> got = run_secure(spec, codec, q, xe, 900);
  CHECK(got == want);
}

TEST_CASE("secure desk inference equals the fixed-point oracle bit for bit") {
  ModelSpec spec = desk_spec();
  ModelWeights w = gen_weights(spec, 2026);
  FixedCodec codec(64, 4);
  QuantizedModel q = quantize_weights(spec, w, codec);

  std::vector<double> x = wave_input(3 * 32 * 32, 0.8);
  std::vector<uint64_t> xe(x.size());
  for (size_t i = 0; i < x.size(); ++i) xe[i] = codec.encode(x[i]);

  std::vector<uint64_t> want = infer_fixed(spec, q, codec, xe);
  size_t rounds = 0;
  std::vector<uint64_t> got = run_secure(spec, codec, q, xe, 901, &rounds);
  CHECK(got == want);
  CHECK(rounds == 19);
  CHECK(argmax_fixed(codec.ring, got) == argmax_fixed(codec.ring, want));
}

TEST_CASE("secure evaluation covers padded pooling and average pooling") {
  ModelSpec spec;
  spec.in_c = 2;
  spec.in_h = 6;
  spec.in_w = 6;
  spec.classes = 2;
  spec.layers.push_back({.kind = LayerKind::MaxPool, .input = -1, .k = 3,
                         .pool_stride = 2, .pool_pad = 1});
  spec.layers.push_back({.kind = LayerKind::AvgPool, .input = 0, .k = 2,
                         .pool_stride = 2, .pool_pad = 0});
  spec.layers.push_back({.kind = LayerKind::GlobalAvgPool, .input = 1});
  spec.layers.push_back({.kind = LayerKind::Dense, .input = 2, .units = 2});
  validate_spec(spec);

  PreprocessingPlan plan = plan_preprocessing(spec, 64, 3);
  CHECK(plan.layers[0].compare_units == 110);
  CHECK(plan.layers[1].trunc_units == 2);

  ModelWeights w = gen_weights(spec, 8);
  FixedCodec codec(64, 3);
  QuantizedModel q = quantize_weights(spec, w, codec);
  std::vector<double> x = wave_input(2 * 6 * 6, 1.5);
  std::vector<uint64_t> xe(x.size());
  for (size_t i = 0; i < x.size(); ++i) xe[i] = codec.encode(x[i]);

  std::vector<uint64_t> want = infer_fixed(spec, q, codec, xe);
  size_t rounds = 0;
  std::vector<uint64_t> got = run_secure(spec, codec, q, xe, 902, &rounds);
  CHECK(got == want);
  // Widest window holds 9 taps: four elimination stages of two rounds,
  // then 2 + 2 for the averaging stages and 3 for the head.
  CHECK(rounds == 15);
}

TEST_CASE("secure evaluation covers residual joins") {
  ModelSpec spec;
  spec.in_c = 2;
  spec.in_h = 4;
  spec.in_w = 4;
  spec.classes = 2;
  spec.layers.push_back({.kind = LayerKind::Conv, .input = -1, .c_out = 2,
                         .kh = 3, .kw = 3, .stride = 1, .pad = 1});
  spec.layers.push_back({.kind = LayerKind::Relu, .input = 0});
  spec.layers.push_back({.kind = LayerKind::ResidualAdd, .input = 1, .input2 = -1});
  spec.layers.push_back({.kind = LayerKind::GlobalAvgPool, .input = 2});
  spec.layers.push_back({.kind = LayerKind::Dense, .input = 3, .units = 2});
  validate_spec(spec);

  ModelWeights w = gen_weights(spec, 12);
  FixedCodec codec(64, 4);
  QuantizedModel q = quantize_weights(spec, w, codec);
  std::vector<double> x = wave_input(2 * 4 * 4, 0.7);
  std::vector<uint64_t> xe(x.size());
  for (size_t i = 0; i < x.size(); ++i) xe[i] = codec.encode(x[i]);

  std::vector<uint64_t> want = infer_fixed(spec, q, codec, xe);
  std::vector<uint64_t> got = run_secure(spec, codec, q, xe, 903);
  CHECK(got == want);
}

TEST_CASE("secure evaluation rejects short material") {
  ModelSpec spec = flat_head_spec(3, 2);
  FixedCodec codec(64, 4);
  ModelWeights w = gen_weights(spec, 1);
  QuantizedModel q = quantize_weights(spec, w, codec);
  Prg rng = Prg::from_seed(seed_from_u64(5), 1);
  auto [w0, w1] = split_model_shares(q, rng);
  std::vector<uint64_t> xe(3, codec.encode(0.5));
  auto [x0, x1] = split_shares(codec.ring, xe, rng);

  PreprocessingPlan plan = plan_preprocessing(spec, 64, 4);
  auto [m0, m1] = generate_material(plan, seed_from_u64(6));

  LocalPair pair(codec.ring);
  LocalEnd e0(&pair, 0), e1(&pair, 1);

  std::vector<LayerMaterial> short0(m0.begin(), m0.end() - 1);
  std::vector<LayerMaterial> short1(m1.begin(), m1.end() - 1);
  CHECK_THROWS_AS(
      run_parties([&] { secure_infer(spec, codec, 0, e0, w0, short0, x0); },
                  [&] { secure_infer(spec, codec, 1, e1, w1, short1, x1); }),
      ProtocolError);

  auto drained0 = m0;
  auto drained1 = m1;
  drained0[0].trunc.pop_back();
  drained1[0].trunc.pop_back();
  CHECK_THROWS_AS(
      run_parties([&] { secure_infer(spec, codec, 0, e0, w0, drained0, x0); },
                  [&] { secure_infer(spec, codec, 1, e1, w1, drained1, x1); }),
      ProtocolError);
}
