#pragma once

#include <vector>

#include "usaad/autodiff/graph.hpp"
#include "usaad/core/blas.hpp"
#include "usaad/core/tensor.hpp"

namespace usaad::ad {

enum class PadMode { Zero, Reflect };

namespace detail {

// Reflect-101 (no edge repeat): -1 -> 1, n -> n-2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// cols is (C*k*k) x (Ho*Wo), row-major.
template <typename T>
void im2col(const T* img, int c_in, int h, int w, int k, int stride, int pad, PadMode mode,
            int ho, int wo, T* cols) {
  const std::size_t out_hw = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c) {
    const T* src = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * out_hw;
        for (int y = 0; y < ho; ++y) {
          int sy = y * stride - pad + ki;
          if (mode == PadMode::Zero && (sy < 0 || sy >= h)) {
            std::fill_n(row + static_cast<std::size_t>(y) * wo, wo, T{});
            continue;
          }
          int ry = mode == PadMode::Zero ? sy : reflect_index(sy, h);
          const T* src_row = src + static_cast<std::size_t>(ry) * w;
          T* dst = row + static_cast<std::size_t>(y) * wo;
          for (int x = 0; x < wo; ++x) {
            int sx = x * stride - pad + kj;
            if (mode == PadMode::Zero) {
              dst[x] = (sx < 0 || sx >= w) ? T{} : src_row[sx];
            } else {
              dst[x] = src_row[reflect_index(sx, w)];
            }
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col: cols (C*k*k) x (Ho*Wo) back into img.
template <typename T>
void col2im_add(const T* cols, int c_in, int h, int w, int k, int stride, int pad, PadMode mode,
                int ho, int wo, T* img) {
  const std::size_t out_hw = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * out_hw;
        for (int y = 0; y < ho; ++y) {
          int sy = y * stride - pad + ki;
          if (sy < 0 || sy >= h) {
            if (mode == PadMode::Zero) continue;
            sy = reflect_index(sy, h);
          }
          T* dst_row = dst + static_cast<std::size_t>(sy) * w;
          const T* src = row + static_cast<std::size_t>(y) * wo;
          for (int x = 0; x < wo; ++x) {
            int sx = x * stride - pad + kj;
            if (sx < 0 || sx >= w) {
              if (mode == PadMode::Zero) continue;
              sx = reflect_index(sx, w);
            }
            dst_row[sx] += src[x];
          }
        }
      }
    }
  }
}

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace detail

// x: (N, Cin, H, W), w: (Cout, Cin, k, k), b: (1, Cout, 1, 1) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad,
              PadMode mode = PadMode::Zero) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const int k = wv.h();
  const int c_in = xv.c(), c_out = wv.n();
  if (wv.c() != c_in) throw UsageError("conv2d: channel mismatch");
  const int ho = detail::conv_out_size(xv.h(), k, stride, pad);
  const int wo = detail::conv_out_size(xv.w(), k, stride, pad);
  if (ho < 1 || wo < 1)
    throw UsageError("conv2d: input " + std::to_string(xv.h()) + "x" + std::to_string(xv.w()) +
                     " smaller than the layer receptive field");

  const int ckk = c_in * k * k;
  const std::size_t out_hw = static_cast<std::size_t>(ho) * wo;
  Tensor<T> out(xv.n(), c_out, ho, wo);
  std::vector<T> cols(static_cast<std::size_t>(ckk) * out_hw);
  for (int n = 0; n < xv.n(); ++n) {
    detail::im2col(xv.plane(n, 0), c_in, xv.h(), xv.w(), k, stride, pad, mode, ho, wo,
                   cols.data());
    gemm(false, false, c_out, static_cast<int>(out_hw), ckk, T{1}, wv.data(), ckk, cols.data(),
         static_cast<int>(out_hw), T{0}, out.plane(n, 0), static_cast<int>(out_hw));
    if (b.defined()) {
      for (int c = 0; c < c_out; ++c) {
        T bias = b.value().data()[c];
        T* p = out.plane(n, c);
        for (std::size_t i = 0; i < out_hw; ++i) p[i] += bias;
      }
    }
  }

  return Var<T>::make(std::move(out), {x, w, b}, [x, w, b, stride, pad, mode, k](Node<T>& n) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    const int c_in = xv.c(), c_out = wv.n(), ckk = c_in * k * k;
    const int ho = n.value.h(), wo = n.value.w();
    const std::size_t out_hw = static_cast<std::size_t>(ho) * wo;
    std::vector<T> cols(static_cast<std::size_t>(ckk) * out_hw);
    for (int bn = 0; bn < xv.n(); ++bn) {
      const T* gy = n.grad.plane(bn, 0);
      if (w.requires_grad()) {
        detail::im2col(xv.plane(bn, 0), c_in, xv.h(), xv.w(), k, stride, pad, mode, ho, wo,
                       cols.data());
        gemm(false, true, c_out, ckk, static_cast<int>(out_hw), T{1}, gy,
             static_cast<int>(out_hw), cols.data(), static_cast<int>(out_hw), T{1},
             w.node()->grad_buffer().data(), ckk);
      }
      if (x.requires_grad()) {
        gemm(true, false, ckk, static_cast<int>(out_hw), c_out, T{1}, wv.data(), ckk, gy,
             static_cast<int>(out_hw), T{0}, cols.data(), static_cast<int>(out_hw));
        detail::col2im_add(cols.data(), c_in, xv.h(), xv.w(), k, stride, pad, mode, ho, wo,
                           x.node()->grad_buffer().plane(bn, 0));
      }
      if (b.defined() && b.requires_grad()) {
        Tensor<T>& gb = b.node()->grad_buffer();
        for (int c = 0; c < c_out; ++c) {
          const T* g = n.grad.plane(bn, c);
          double acc = 0;
          for (std::size_t i = 0; i < out_hw; ++i) acc += g[i];
          gb.data()[c] += static_cast<T>(acc);
        }
      }
    }
  });
}

// Fractionally-strided transpose of conv2d (zero padding only).
// x: (N, Cin, H, W), w: (Cin, Cout, k, k), out: (N, Cout, Ho, Wo) with
// Ho = (H-1)*stride - 2*pad + k + out_pad.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad,
                        int out_pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const int k = wv.h();
  const int c_in = xv.c(), c_out = wv.c();
  if (wv.n() != c_in) throw UsageError("conv_transpose2d: channel mismatch");
  const int ho = (xv.h() - 1) * stride - 2 * pad + k + out_pad;
  const int wo = (xv.w() - 1) * stride - 2 * pad + k + out_pad;
  if (ho < 1 || wo < 1) throw UsageError("conv_transpose2d: degenerate output size");

  const int ckk = c_out * k * k;
  const std::size_t in_hw = static_cast<std::size_t>(xv.h()) * xv.w();
  Tensor<T> out(xv.n(), c_out, ho, wo);
  std::vector<T> cols(static_cast<std::size_t>(ckk) * in_hw);
  for (int n = 0; n < xv.n(); ++n) {
    // cols = W^T (Cout*k*k x Cin) * X (Cin x H*W)
    gemm(true, false, ckk, static_cast<int>(in_hw), c_in, T{1}, wv.data(), ckk, xv.plane(n, 0),
         static_cast<int>(in_hw), T{0}, cols.data(), static_cast<int>(in_hw));
    detail::col2im_add(cols.data(), c_out, ho, wo, k, stride, pad, PadMode::Zero, xv.h(), xv.w(),
                       out.plane(n, 0));
    if (b.defined()) {
      const std::size_t out_hw = static_cast<std::size_t>(ho) * wo;
      for (int c = 0; c < c_out; ++c) {
        T bias = b.value().data()[c];
        T* p = out.plane(n, c);
        for (std::size_t i = 0; i < out_hw; ++i) p[i] += bias;
      }
    }
  }

  return Var<T>::make(std::move(out), {x, w, b}, [x, w, b, stride, pad, k](Node<T>& n) {
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    const int c_in = xv.c(), c_out = wv.c(), ckk = c_out * k * k;
    const int ho = n.value.h(), wo = n.value.w();
    const std::size_t in_hw = static_cast<std::size_t>(xv.h()) * xv.w();
    std::vector<T> cols(static_cast<std::size_t>(ckk) * in_hw);
    for (int bn = 0; bn < xv.n(); ++bn) {
      detail::im2col(n.grad.plane(bn, 0), c_out, ho, wo, k, stride, pad, PadMode::Zero, xv.h(),
                     xv.w(), cols.data());
      if (x.requires_grad()) {
        gemm(false, false, c_in, static_cast<int>(in_hw), ckk, T{1}, wv.data(), ckk, cols.data(),
             static_cast<int>(in_hw), T{1},
             x.node()->grad_buffer().plane(bn, 0), static_cast<int>(in_hw));
      }
      if (w.requires_grad()) {
        gemm(false, true, c_in, ckk, static_cast<int>(in_hw), T{1}, xv.plane(bn, 0),
             static_cast<int>(in_hw), cols.data(), static_cast<int>(in_hw), T{1},
             w.node()->grad_buffer().data(), ckk);
      }
      if (b.defined() && b.requires_grad()) {
        Tensor<T>& gb = b.node()->grad_buffer();
        const std::size_t out_hw = static_cast<std::size_t>(ho) * wo;
        for (int c = 0; c < c_out; ++c) {
          const T* g = n.grad.plane(bn, c);
          double acc = 0;
          for (std::size_t i = 0; i < out_hw; ++i) acc += g[i];
          gb.data()[c] += static_cast<T>(acc);
        }
      }
    }
  });
}

}  // namespace usaad::ad
