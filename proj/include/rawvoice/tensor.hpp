#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "rawvoice/error.hpp"

namespace rawvoice {

/// Dense n-dimensional array in row-major order. The scalar type is a
/// template parameter: float for the pipeline, double for numerical checks.
template <typename S = float>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<S> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shp)
      : shape(std::move(shp)), data(product(shape), S(0)) {}

  Tensor(std::vector<std::size_t> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (data.size() != product(shape)) {
      throw ShapeError("tensor data size does not match shape");
    }
  }

  static Tensor zeros(std::vector<std::size_t> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<std::size_t> shp, S value) {
    Tensor t(std::move(shp));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // Indexed access for up to three dimensions; used in tests and small ops.
  S& at(std::size_t i) { return data[i]; }
  S at(std::size_t i) const { return data[i]; }
  S& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  S at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  S& at(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  S at(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }

  static std::size_t product(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (std::size_t d : shp) n *= d;
    return shp.empty() ? 0 : n;
  }
};

}  // namespace rawvoice
