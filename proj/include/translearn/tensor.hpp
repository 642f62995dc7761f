#pragma once
// Dense double-precision tensor in row-major (NCHW for images) layout.
//
// Double precision is deliberate: it lets finite-difference gradient checks
// resolve relative errors below 1e-4 and keeps reduction order effects far
// below the bit-comparison thresholds the training modes are tested against.

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "translearn/rng.hpp"

namespace translearn {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(count(shape_)), 0.0);
  }

  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(count(shape_)) != data_.size())
      throw std::invalid_argument("Tensor: shape does not match data size");
  }

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor randn(std::vector<int> shape, Rng& rng, double mean = 0.0,
                      double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.normal(mean, stddev);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // NCHW accessors.
  double& at4(int n, int c, int h, int w) {
    return data_[idx4(n, c, h, w)];
  }
  double at4(int n, int c, int h, int w) const {
    return data_[idx4(n, c, h, w)];
  }
  double& at2(int r, int c) {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
  }
  double at2(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
  }

  Tensor reshaped(std::vector<int> new_shape) const {
    if (count(new_shape) != size())
      throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    return Tensor(std::move(new_shape), data_);
  }

  void fill(double v) {
    for (auto& x : data_) x = v;
  }

  void add_(const Tensor& other) {
    assert(other.size() == size());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  }

  void scale_(double s) {
    for (auto& x : data_) x *= s;
  }

  double sum() const {
    double s = 0.0;
    for (double x : data_) s += x;
    return s;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  std::uint64_t content_hash(std::uint64_t h = 0xCBF29CE484222325ull) const {
    return fnv1a(data_.data(), data_.size() * sizeof(double), h);
  }

 private:
  std::size_t idx4(int n, int c, int h, int w) const {
    assert(shape_.size() == 4);
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] + w;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace translearn
