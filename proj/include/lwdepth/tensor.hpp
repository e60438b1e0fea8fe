#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lwdepth/error.hpp"

namespace lwdepth {

/// Dense NCHW tensor. Owns its storage; copies are deep.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{})
      : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
      throw DimensionError("negative tensor dimension");
    }
    data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  int batch() const noexcept { return n_; }
  int channels() const noexcept { return c_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(h_) * w_;
  }
  std::size_t sample_size() const noexcept { return plane_size() * c_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }

  T* plane(int n, int c) noexcept {
    return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size();
  }
  const T* plane(int n, int c) const noexcept {
    return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * plane_size();
  }
  T* sample(int n) noexcept { return plane(n, 0); }
  const T* sample(int n) const noexcept { return plane(n, 0); }

  T& operator()(int n, int c, int y, int x) noexcept {
    return plane(n, c)[static_cast<std::size_t>(y) * w_ + x];
  }
  const T& operator()(int n, int c, int y, int x) const noexcept {
    return plane(n, c)[static_cast<std::size_t>(y) * w_ + x];
  }

  bool same_shape(const Tensor& o) const noexcept {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }
  template <typename U>
  bool same_shape(const Tensor<U>& o) const noexcept {
    return n_ == o.batch() && c_ == o.channels() && h_ == o.height() &&
           w_ == o.width();
  }

  std::string shape_string() const {
    return std::to_string(n_) + "x" + std::to_string(c_) + "x" +
           std::to_string(h_) + "x" + std::to_string(w_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  Tensor<To> out(src.batch(), src.channels(), src.height(), src.width());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out.data()[i] = static_cast<To>(src.data()[i]);
  }
  return out;
}

}  // namespace lwdepth
