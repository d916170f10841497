#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "prunekit/error.hpp"

namespace prunekit {

// Dense shape. Activations are NCHW; conv kernels (out, in, kh, kw);
// per-channel vectors rank 1; linear weights (out, in).
struct TensorShape {
  std::vector<int64_t> dims;

  TensorShape() = default;
  TensorShape(std::initializer_list<int64_t> d) : dims(d) {}
  explicit TensorShape(std::vector<int64_t> d) : dims(std::move(d)) {}

  int rank() const { return static_cast<int>(dims.size()); }

  int64_t elems() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }

  int64_t operator[](int i) const { return dims[static_cast<size_t>(i)]; }

  bool operator==(const TensorShape& o) const { return dims == o.dims; }
  bool operator!=(const TensorShape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << ")";
    return os.str();
  }

  void validate(const std::string& what) const {
    check(!dims.empty(), "shape of " + what + " is empty");
    for (int64_t d : dims)
      check(d >= 1, "shape of " + what + " has extent < 1: " + str());
  }
};

// Flat fp32 tensor with value semantics.
struct Tensor {
  TensorShape shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(TensorShape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    check(static_cast<int64_t>(data.size()) == shape.elems(),
          "tensor data size does not match shape " + shape.str());
  }

  static Tensor zeros(TensorShape s) {
    std::vector<float> d(static_cast<size_t>(s.elems()), 0.0f);
    return Tensor(std::move(s), std::move(d));
  }

  int64_t elems() const { return static_cast<int64_t>(data.size()); }

  // NCHW access for rank-4 tensors.
  float& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    const auto& d = shape.dims;
    return data[static_cast<size_t>(((n * d[1] + c) * d[2] + h) * d[3] + w)];
  }
  float at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    const auto& d = shape.dims;
    return data[static_cast<size_t>(((n * d[1] + c) * d[2] + h) * d[3] + w)];
  }

  bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }
};

// Removes `indices` (sorted, distinct) from `axis` of a tensor.
inline Tensor drop_along_axis(const Tensor& t, int axis, const std::vector<int64_t>& indices) {
  if (indices.empty()) return t;
  const auto& dims = t.shape.dims;
  check(axis >= 0 && axis < t.shape.rank(), "drop_along_axis: bad axis");
  const int64_t extent = dims[static_cast<size_t>(axis)];
  std::vector<char> removed(static_cast<size_t>(extent), 0);
  for (size_t i = 0; i < indices.size(); ++i) {
    int64_t idx = indices[i];
    check(idx >= 0 && idx < extent, "drop_along_axis: index out of range");
    check(i == 0 || indices[i - 1] < idx, "drop_along_axis: indices not sorted/distinct");
    removed[static_cast<size_t>(idx)] = 1;
  }
  int64_t keep = extent - static_cast<int64_t>(indices.size());
  check(keep >= 1, "drop_along_axis: would remove all entries");

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= dims[static_cast<size_t>(i)];
  for (int i = axis + 1; i < t.shape.rank(); ++i) inner *= dims[static_cast<size_t>(i)];

  TensorShape out_shape = t.shape;
  out_shape.dims[static_cast<size_t>(axis)] = keep;
  Tensor out = Tensor::zeros(out_shape);

  const float* src = t.data.data();
  float* dst = out.data.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t e = 0; e < extent; ++e) {
      if (removed[static_cast<size_t>(e)]) continue;
      const float* s = src + (o * extent + e) * inner;
      std::copy(s, s + inner, dst);
      dst += inner;
    }
  }
  return out;
}

}  // namespace prunekit
