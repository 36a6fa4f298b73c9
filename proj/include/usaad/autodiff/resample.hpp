#pragma once

#include <cmath>
#include <vector>

#include "usaad/autodiff/graph.hpp"
#include "usaad/core/tensor.hpp"

namespace usaad::ad {

namespace detail {

struct Tap {
  int lo, hi;
  float w_hi;  // weight on hi; weight on lo is 1 - w_hi
};

// Half-pixel-center sampling with edge clamp.
inline std::vector<Tap> bilinear_taps(int out, int in) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double pos = (i + 0.5) * scale - 0.5;
    int lo = static_cast<int>(std::floor(pos));
    double frac = pos - lo;
    int hi = lo + 1;
    if (lo < 0) lo = 0;
    if (hi > in - 1) hi = in - 1;
    if (lo > in - 1) lo = in - 1;
    taps[i] = {lo, hi, static_cast<float>(frac)};
  }
  return taps;
}

}  // namespace detail

// Differentiable bilinear resize to an explicit size.
template <typename T>
Var<T> bilinear_resize(const Var<T>& a, int out_h, int out_w) {
  const Tensor<T>& x = a.value();
  auto ty = std::make_shared<std::vector<detail::Tap>>(detail::bilinear_taps(out_h, x.h()));
  auto tx = std::make_shared<std::vector<detail::Tap>>(detail::bilinear_taps(out_w, x.w()));
  Tensor<T> out(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (int i = 0; i < out_h; ++i) {
        const auto& yt = (*ty)[i];
        const T* r0 = src + static_cast<std::size_t>(yt.lo) * x.w();
        const T* r1 = src + static_cast<std::size_t>(yt.hi) * x.w();
        const T wy = static_cast<T>(yt.w_hi);
        for (int j = 0; j < out_w; ++j) {
          const auto& xt = (*tx)[j];
          const T wx = static_cast<T>(xt.w_hi);
          T top = r0[xt.lo] * (T{1} - wx) + r0[xt.hi] * wx;
          T bot = r1[xt.lo] * (T{1} - wx) + r1[xt.hi] * wx;
          dst[static_cast<std::size_t>(i) * out_w + j] = top * (T{1} - wy) + bot * wy;
        }
      }
    }
  }
  return Var<T>::make(std::move(out), {a}, [a, ty, tx](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const int out_h = n.value.h(), out_w = n.value.w();
    for (int bn = 0; bn < ga.n(); ++bn) {
      for (int c = 0; c < ga.c(); ++c) {
        T* dst = ga.plane(bn, c);
        const T* g = n.grad.plane(bn, c);
        for (int i = 0; i < out_h; ++i) {
          const auto& yt = (*ty)[i];
          const T wy = static_cast<T>(yt.w_hi);
          for (int j = 0; j < out_w; ++j) {
            const auto& xt = (*tx)[j];
            const T wx = static_cast<T>(xt.w_hi);
            T gg = g[static_cast<std::size_t>(i) * out_w + j];
            dst[static_cast<std::size_t>(yt.lo) * ga.w() + xt.lo] += gg * (T{1} - wy) * (T{1} - wx);
            dst[static_cast<std::size_t>(yt.lo) * ga.w() + xt.hi] += gg * (T{1} - wy) * wx;
            dst[static_cast<std::size_t>(yt.hi) * ga.w() + xt.lo] += gg * wy * (T{1} - wx);
            dst[static_cast<std::size_t>(yt.hi) * ga.w() + xt.hi] += gg * wy * wx;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> upsample2x(const Var<T>& a) {
  return bilinear_resize(a, a.value().h() * 2, a.value().w() * 2);
}

}  // namespace usaad::ad
