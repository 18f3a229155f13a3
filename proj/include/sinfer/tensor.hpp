#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "sinfer/errors.hpp"

namespace sinfer {

inline size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

// Dense row-major tensor.  Convolutional feature maps are stored
// channel-major (CHW); matrices are (rows, cols).
template <typename T>
struct Tensor {
  std::vector<size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)), data(shape_numel(shape)) {}
  Tensor(std::vector<size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape)) throw ShapeError("tensor data does not match shape");
  }

  size_t numel() const { return data.size(); }
  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  T& at(size_t i, size_t j) { return data[i * shape[1] + j]; }
  const T& at(size_t i, size_t j) const { return data[i * shape[1] + j]; }
};

// Geometry of a 2-D convolution over a CHW map, shared by every engine so
// the lowering to a matrix product is identical everywhere.
struct ConvGeom {
  size_t c_in = 0, h = 0, w = 0;
  size_t c_out = 0, kh = 0, kw = 0;
  size_t stride = 1, pad = 0;

  size_t out_h() const { return (h + 2 * pad - kh) / stride + 1; }
  size_t out_w() const { return (w + 2 * pad - kw) / stride + 1; }
  size_t rows() const { return out_h() * out_w(); }
  size_t cols() const { return c_in * kh * kw; }

  bool valid() const {
    return c_in > 0 && c_out > 0 && kh > 0 && kw > 0 && stride > 0 &&
           pad < kh && pad < kw && h + 2 * pad >= kh && w + 2 * pad >= kw;
  }
};

// Patch matrix of shape (out_h*out_w, c_in*kh*kw); column index is
// c*kh*kw + ky*kw + kx, out-of-image taps are zero.
template <typename T>
Tensor<T> im2col(const ConvGeom& g, const T* chw) {
  Tensor<T> m({g.rows(), g.cols()});
  const size_t oh = g.out_h(), ow = g.out_w();
  for (size_t oy = 0; oy < oh; ++oy) {
    for (size_t ox = 0; ox < ow; ++ox) {
      T* row = &m.data[(oy * ow + ox) * g.cols()];
      for (size_t c = 0; c < g.c_in; ++c) {
        for (size_t ky = 0; ky < g.kh; ++ky) {
          for (size_t kx = 0; kx < g.kw; ++kx) {
            long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
            long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            T v{};
            if (y >= 0 && y < static_cast<long>(g.h) && x >= 0 && x < static_cast<long>(g.w))
              v = chw[(c * g.h + static_cast<size_t>(y)) * g.w + static_cast<size_t>(x)];
            row[c * g.kh * g.kw + ky * g.kw + kx] = v;
          }
        }
      }
    }
  }
  return m;
}

// Pooling window geometry over a CHW map.  Padded taps fall outside the
// image and are simply dropped from the window.
struct PoolGeom {
  size_t channels = 0, h = 0, w = 0;
  size_t k = 0, stride = 0, pad = 0;

  size_t out_h() const { return (h + 2 * pad - k) / stride + 1; }
  size_t out_w() const { return (w + 2 * pad - k) / stride + 1; }
  size_t windows() const { return channels * out_h() * out_w(); }

  bool valid() const {
    return channels > 0 && k > 0 && stride > 0 && pad < k && h + 2 * pad >= k &&
           w + 2 * pad >= k;
  }

  // Flat input offsets of the in-image taps of one pooling window.
  void window_offsets(size_t c, size_t oy, size_t ox, std::vector<size_t>& out) const {
    out.clear();
    for (size_t ky = 0; ky < k; ++ky) {
      for (size_t kx = 0; kx < k; ++kx) {
        long y = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
        long x = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
        if (y < 0 || y >= static_cast<long>(h) || x < 0 || x >= static_cast<long>(w))
          continue;
        out.push_back((c * h + static_cast<size_t>(y)) * w + static_cast<size_t>(x));
      }
    }
  }
};

}  // namespace sinfer
