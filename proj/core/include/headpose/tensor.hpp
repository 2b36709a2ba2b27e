#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "headpose/error.hpp"

namespace headpose {

/// Dense row-major tensor. The scalar type is a template parameter so the
/// same layer code can run in float (training, checkpoints) and in double
/// (finite-difference verification).
template <typename S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> dims) : shape(std::move(dims)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }

  static int64_t numel_of(const std::vector<int>& dims) {
    int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool same_shape(const TensorT& other) const { return shape == other.shape; }

  void fill(S value) { std::fill(data.begin(), data.end(), value); }

  std::string shape_string() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

using Tensor = TensorT<float>;

}  // namespace headpose
