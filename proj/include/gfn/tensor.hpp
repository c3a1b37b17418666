#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gfn::diff {

/// Dense row-major tensor of 64-bit floats. Rank 0 (empty shape) is a scalar.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int> dims) {
    Tensor t;
    std::int64_t n = 1;
    for (int d : dims) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    t.shape = std::move(dims);
    t.data.assign(static_cast<std::size_t>(n), 0.0);
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.data.assign(1, v);
    return t;
  }

  static Tensor vec(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data = std::move(v);
    return t;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  bool is_scalar() const { return data.size() == 1 && shape.size() <= 1; }

  double scalar_value() const {
    if (data.size() != 1) throw std::invalid_argument("Tensor: not a scalar");
    return data[0];
  }

  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    return 1;
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_extent(const Tensor& o) const { return data.size() == o.data.size(); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace gfn::diff
