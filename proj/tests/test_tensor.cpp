#include <doctest.h>

#include "sinfer/tensor.hpp"

using namespace sinfer;

TEST_CASE("im2col lowers a 3x3 single-channel map with a 2x2 kernel") {
  ConvGeom g{.c_in = 1, .h = 3, .w = 3, .c_out = 1, .kh = 2, .kw = 2, .stride = 1, .pad = 0};
  int chw[9] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto m = im2col(g, chw);
  REQUIRE(m.shape == std::vector<size_t>{4, 4});
  int expect[4][4] = {{1, 2, 4, 5}, {2, 3, 5, 6}, {4, 5, 7, 8}, {5, 6, 8, 9}};
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j) CHECK(m.at(i, j) == expect[i][j]);
}

TEST_CASE("im2col zero-pads out-of-image taps") {
  ConvGeom g{.c_in = 1, .h = 2, .w = 2, .c_out = 1, .kh = 3, .kw = 3, .stride = 1, .pad = 1};
  int chw[4] = {1, 2, 3, 4};
  auto m = im2col(g, chw);
  REQUIRE(m.shape == std::vector<size_t>{4, 9});
  int first[9] = {0, 0, 0, 0, 1, 2, 0, 3, 4};
  int last[9] = {1, 2, 0, 3, 4, 0, 0, 0, 0};
  for (size_t j = 0; j < 9; ++j) {
    CHECK(m.at(0, j) == first[j]);
    CHECK(m.at(3, j) == last[j]);
  }
}

TEST_CASE("im2col interleaves channels kernel-major") {
  ConvGeom g{.c_in = 2, .h = 2, .w = 2, .c_out = 1, .kh = 1, .kw = 1, .stride = 1, .pad = 0};
  int chw[8] = {1, 2, 3, 4, 10, 20, 30, 40};
  auto m = im2col(g, chw);
  REQUIRE(m.shape == std::vector<size_t>{4, 2});
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(0, 1) == 10);
  CHECK(m.at(3, 0) == 4);
  CHECK(m.at(3, 1) == 40);
}

TEST_CASE("conv geometry matches hand-computed sizes") {
  ConvGeom c1{.c_in = 3, .h = 32, .w = 32, .c_out = 8, .kh = 3, .kw = 3, .stride = 1, .pad = 1};
  CHECK(c1.out_h() == 32);
  CHECK(c1.rows() == 1024);
  CHECK(c1.cols() == 27);
  CHECK(c1.valid());

  ConvGeom stem{.c_in = 3, .h = 224, .w = 224, .c_out = 64, .kh = 7, .kw = 7, .stride = 2, .pad = 3};
  CHECK(stem.out_h() == 112);
  CHECK(stem.out_w() == 112);

  ConvGeom bad{.c_in = 0, .h = 8, .w = 8, .c_out = 1, .kh = 3, .kw = 3};
  CHECK(!bad.valid());
}

TEST_CASE("pool geometry enumerates windows") {
  PoolGeom p{.channels = 1, .h = 4, .w = 4, .k = 2, .stride = 2};
  CHECK(p.out_h() == 2);
  CHECK(p.windows() == 4);
  std::vector<size_t> offs;
  p.window_offsets(0, 1, 1, offs);
  CHECK(offs == std::vector<size_t>{10, 11, 14, 15});

  PoolGeom p8{.channels = 8, .h = 32, .w = 32, .k = 2, .stride = 2};
  CHECK(p8.windows() == 2048);
}

TEST_CASE("tensor shape bookkeeping") {
  Tensor<int> t({2, 3});
  CHECK(t.numel() == 6);
  t.at(1, 2) = 7;
  CHECK(t[5] == 7);
  CHECK_THROWS_AS(Tensor<int>({2, 2}, {1, 2, 3}), ShapeError);
}
