#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "usaad/core/errors.hpp"

namespace usaad {

// Dense NCHW tensor with value semantics. Vectors of per-channel statistics
// are represented as N x C x 1 x 1, scalars as 1 x 1 x 1 x 1.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{})
      : shape_{n, c, h, w},
        data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  static Tensor zeros_like(const Tensor& o) {
    return Tensor(o.n(), o.c(), o.h(), o.w());
  }

  static Tensor scalar(T v) {
    Tensor t(1, 1, 1, 1);
    t.data_[0] = v;
    return t;
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }

  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator()(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  T operator()(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Pointer to the H x W plane of (n, c).
  T* plane(int n, int c) {
    return data_.data() + (static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] * shape_[3];
  }
  const T* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] * shape_[3];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  T min_value() const {
    T m = data_.empty() ? T{} : data_[0];
    for (T v : data_) m = std::min(m, v);
    return m;
  }
  T max_value() const {
    T m = data_.empty() ? T{} : data_[0];
    for (T v : data_) m = std::max(m, v);
    return m;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n(), c(), h(), w());
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  std::array<int, 4> shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw UsageError(std::string(what) + ": shape mismatch (" + std::to_string(a.n()) + "x" +
                     std::to_string(a.c()) + "x" + std::to_string(a.h()) + "x" + std::to_string(a.w()) +
                     " vs " + std::to_string(b.n()) + "x" + std::to_string(b.c()) + "x" +
                     std::to_string(b.h()) + "x" + std::to_string(b.w()) + ")");
  }
}

}  // namespace usaad
