#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "usaad/autodiff/graph.hpp"
#include "usaad/core/tensor.hpp"

namespace usaad::ad {

template <typename T>
Var<T> constant(Tensor<T> v) {
  return Var<T>(std::move(v), false);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return Var<T>::make(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a.requires_grad()) a.node()->accumulate(n.grad);
    if (b.requires_grad()) b.node()->accumulate(n.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
  return Var<T>::make(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a.requires_grad()) a.node()->accumulate(n.grad);
    if (b.requires_grad()) {
      Tensor<T>& gb = b.node()->grad_buffer();
      const T* g = n.grad.data();
      T* p = gb.data();
      for (std::size_t i = 0; i < gb.numel(); ++i) p[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
  return Var<T>::make(std::move(out), {a, b}, [a, b](Node<T>& n) {
    const T* g = n.grad.data();
    if (a.requires_grad()) {
      Tensor<T>& ga = a.node()->grad_buffer();
      const T* pb = b.value().data();
      T* p = ga.data();
      for (std::size_t i = 0; i < ga.numel(); ++i) p[i] += g[i] * pb[i];
    }
    if (b.requires_grad()) {
      Tensor<T>& gb = b.node()->grad_buffer();
      const T* pa = a.value().data();
      T* p = gb.data();
      for (std::size_t i = 0; i < gb.numel(); ++i) p[i] += g[i] * pa[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T k) {
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] *= k;
  return Var<T>::make(std::move(out), {a}, [a, k](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const T* g = n.grad.data();
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) p[i] += g[i] * k;
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::max(po[i], T{0});
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const T* g = n.grad.data();
    const T* x = a.value().data();
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      if (x[i] > T{0}) p[i] += g[i];
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (po[i] < T{0}) po[i] *= slope;
  }
  return Var<T>::make(std::move(out), {a}, [a, slope](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const T* g = n.grad.data();
    const T* x = a.value().data();
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) p[i] += x[i] > T{0} ? g[i] : g[i] * slope;
  });
}

template <typename T>
Var<T> tanh_op(const Var<T>& a) {
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::tanh(po[i]);
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const T* g = n.grad.data();
    const T* y = n.value.data();
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) p[i] += g[i] * (T{1} - y[i] * y[i]);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = T{1} / (T{1} + std::exp(-po[i]));
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const T* g = n.grad.data();
    const T* y = n.value.data();
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) p[i] += g[i] * y[i] * (T{1} - y[i]);
  });
}

// log(sigmoid(x)), evaluated without overflow for large |x|.
template <typename T>
Var<T> log_sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    T x = po[i];
    po[i] = x < T{0} ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
  }
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const T* g = n.grad.data();
    const T* x = a.value().data();
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      // d/dx log sigmoid(x) = sigmoid(-x)
      p[i] += g[i] / (T{1} + std::exp(x[i]));
    }
  });
}

// Pins values into the open unit interval by one representable step; the
// gradient passes through unchanged.
template <typename T>
Var<T> clamp_open_unit(const Var<T>& a) {
  const T lo = std::numeric_limits<T>::epsilon();
  const T hi = T{1} - std::numeric_limits<T>::epsilon();
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::clamp(po[i], lo, hi);
  return Var<T>::make(std::move(out), {a},
                      [a](Node<T>& n) { a.node()->accumulate(n.grad); });
}

template <typename T>
Var<T> abs_op(const Var<T>& a) {
  Tensor<T> out = a.value();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::abs(po[i]);
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const T* g = n.grad.data();
    const T* x = a.value().data();
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      if (x[i] > T{0}) p[i] += g[i];
      else if (x[i] < T{0}) p[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  double acc = 0;
  const T* px = x.data();
  for (std::size_t i = 0; i < x.numel(); ++i) acc += px[i];
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(x.numel())));
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    T g = n.grad.data()[0] / static_cast<T>(ga.numel());
    T* p = ga.data();
    for (std::size_t i = 0; i < ga.numel(); ++i) p[i] += g;
  });
}

template <typename T>
Var<T> add_scalar_var(const Var<T>& a, const Var<T>& b) {
  if (a.value().numel() != 1 || b.value().numel() != 1)
    throw UsageError("add_scalar_var: scalars expected");
  Tensor<T> out = Tensor<T>::scalar(a.value().data()[0] + b.value().data()[0]);
  return Var<T>::make(std::move(out), {a, b}, [a, b](Node<T>& n) {
    if (a.requires_grad()) a.node()->accumulate(n.grad);
    if (b.requires_grad()) b.node()->accumulate(n.grad);
  });
}

// Spatial mean per (n, c): N x C x H x W -> N x C x 1 x 1.
template <typename T>
Var<T> mean_spatial(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.n(), x.c(), 1, 1);
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* p = x.plane(n, c);
      double acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
      out(n, c, 0, 0) = static_cast<T>(acc / static_cast<double>(hw));
    }
  }
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const std::size_t hw = static_cast<std::size_t>(ga.h()) * ga.w();
    const T inv = T{1} / static_cast<T>(hw);
    for (int bn = 0; bn < ga.n(); ++bn) {
      for (int c = 0; c < ga.c(); ++c) {
        T g = n.grad(bn, c, 0, 0) * inv;
        T* p = ga.plane(bn, c);
        for (std::size_t i = 0; i < hw; ++i) p[i] += g;
      }
    }
  });
}

// Channel-wise gate: x (N,C,H,W) * g (N,C,1,1) broadcast over H, W.
template <typename T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& g) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = g.value();
  if (gv.n() != xv.n() || gv.c() != xv.c() || gv.h() != 1 || gv.w() != 1)
    throw UsageError("mul_channel: gate must be N x C x 1 x 1 matching x");
  Tensor<T> out = xv;
  const std::size_t hw = static_cast<std::size_t>(xv.h()) * xv.w();
  for (int n = 0; n < xv.n(); ++n) {
    for (int c = 0; c < xv.c(); ++c) {
      T k = gv(n, c, 0, 0);
      T* p = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) p[i] *= k;
    }
  }
  return Var<T>::make(std::move(out), {x, g}, [x, g](Node<T>& n) {
    const std::size_t hw = static_cast<std::size_t>(x.value().h()) * x.value().w();
    if (x.requires_grad()) {
      Tensor<T>& gx = x.node()->grad_buffer();
      for (int bn = 0; bn < gx.n(); ++bn) {
        for (int c = 0; c < gx.c(); ++c) {
          T k = g.value()(bn, c, 0, 0);
          const T* gn = n.grad.plane(bn, c);
          T* p = gx.plane(bn, c);
          for (std::size_t i = 0; i < hw; ++i) p[i] += gn[i] * k;
        }
      }
    }
    if (g.requires_grad()) {
      Tensor<T>& gg = g.node()->grad_buffer();
      for (int bn = 0; bn < x.value().n(); ++bn) {
        for (int c = 0; c < x.value().c(); ++c) {
          const T* gn = n.grad.plane(bn, c);
          const T* px = x.value().plane(bn, c);
          double acc = 0;
          for (std::size_t i = 0; i < hw; ++i) acc += static_cast<double>(gn[i]) * px[i];
          gg(bn, c, 0, 0) += static_cast<T>(acc);
        }
      }
    }
  });
}

// Spatial gate: x (N,C,H,W) * g (N,1,H,W) broadcast over channels.
template <typename T>
Var<T> mul_spatial(const Var<T>& x, const Var<T>& g) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = g.value();
  if (gv.n() != xv.n() || gv.c() != 1 || gv.h() != xv.h() || gv.w() != xv.w())
    throw UsageError("mul_spatial: gate must be N x 1 x H x W matching x");
  Tensor<T> out = xv;
  const std::size_t hw = static_cast<std::size_t>(xv.h()) * xv.w();
  for (int n = 0; n < xv.n(); ++n) {
    const T* pg = gv.plane(n, 0);
    for (int c = 0; c < xv.c(); ++c) {
      T* p = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) p[i] *= pg[i];
    }
  }
  return Var<T>::make(std::move(out), {x, g}, [x, g](Node<T>& n) {
    const std::size_t hw = static_cast<std::size_t>(x.value().h()) * x.value().w();
    if (x.requires_grad()) {
      Tensor<T>& gx = x.node()->grad_buffer();
      for (int bn = 0; bn < gx.n(); ++bn) {
        const T* pg = g.value().plane(bn, 0);
        for (int c = 0; c < gx.c(); ++c) {
          const T* gn = n.grad.plane(bn, c);
          T* p = gx.plane(bn, c);
          for (std::size_t i = 0; i < hw; ++i) p[i] += gn[i] * pg[i];
        }
      }
    }
    if (g.requires_grad()) {
      Tensor<T>& gg = g.node()->grad_buffer();
      for (int bn = 0; bn < x.value().n(); ++bn) {
        T* pgg = gg.plane(bn, 0);
        for (int c = 0; c < x.value().c(); ++c) {
          const T* gn = n.grad.plane(bn, c);
          const T* px = x.value().plane(bn, c);
          for (std::size_t i = 0; i < hw; ++i) pgg[i] += gn[i] * px[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w())
    throw UsageError("concat_channels: N/H/W mismatch");
  Tensor<T> out(av.n(), av.c() + bv.c(), av.h(), av.w());
  const std::size_t hw = static_cast<std::size_t>(av.h()) * av.w();
  for (int n = 0; n < av.n(); ++n) {
    for (int c = 0; c < av.c(); ++c)
      std::copy_n(av.plane(n, c), hw, out.plane(n, c));
    for (int c = 0; c < bv.c(); ++c)
      std::copy_n(bv.plane(n, c), hw, out.plane(n, av.c() + c));
  }
  const int ca = av.c();
  return Var<T>::make(std::move(out), {a, b}, [a, b, ca](Node<T>& n) {
    const std::size_t hw = static_cast<std::size_t>(n.value.h()) * n.value.w();
    if (a.requires_grad()) {
      Tensor<T>& ga = a.node()->grad_buffer();
      for (int bn = 0; bn < ga.n(); ++bn) {
        for (int c = 0; c < ga.c(); ++c) {
          const T* g = n.grad.plane(bn, c);
          T* p = ga.plane(bn, c);
          for (std::size_t i = 0; i < hw; ++i) p[i] += g[i];
        }
      }
    }
    if (b.requires_grad()) {
      Tensor<T>& gb = b.node()->grad_buffer();
      for (int bn = 0; bn < gb.n(); ++bn) {
        for (int c = 0; c < gb.c(); ++c) {
          const T* g = n.grad.plane(bn, ca + c);
          T* p = gb.plane(bn, c);
          for (std::size_t i = 0; i < hw; ++i) p[i] += g[i];
        }
      }
    }
  });
}

// Per-pixel mean over channels: N x C x H x W -> N x 1 x H x W.
template <typename T>
Var<T> mean_channels(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.n(), 1, x.h(), x.w());
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  const T inv = T{1} / static_cast<T>(x.c());
  for (int n = 0; n < x.n(); ++n) {
    T* po = out.plane(n, 0);
    for (int c = 0; c < x.c(); ++c) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) po[i] += p[i];
    }
    for (std::size_t i = 0; i < hw; ++i) po[i] *= inv;
  }
  return Var<T>::make(std::move(out), {a}, [a](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const std::size_t hw = static_cast<std::size_t>(ga.h()) * ga.w();
    const T inv = T{1} / static_cast<T>(ga.c());
    for (int bn = 0; bn < ga.n(); ++bn) {
      const T* g = n.grad.plane(bn, 0);
      for (int c = 0; c < ga.c(); ++c) {
        T* p = ga.plane(bn, c);
        for (std::size_t i = 0; i < hw; ++i) p[i] += g[i] * inv;
      }
    }
  });
}

// Per-pixel max over channels; gradient routes to the argmax channel.
template <typename T>
Var<T> max_channels(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.n(), 1, x.h(), x.w());
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(x.n()) * x.h() * x.w());
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    T* po = out.plane(n, 0);
    int* am = argmax->data() + static_cast<std::size_t>(n) * hw;
    const T* p0 = x.plane(n, 0);
    std::copy_n(p0, hw, po);
    std::fill_n(am, hw, 0);
    for (int c = 1; c < x.c(); ++c) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        if (p[i] > po[i]) {
          po[i] = p[i];
          am[i] = c;
        }
      }
    }
  }
  return Var<T>::make(std::move(out), {a}, [a, argmax](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const std::size_t hw = static_cast<std::size_t>(ga.h()) * ga.w();
    for (int bn = 0; bn < ga.n(); ++bn) {
      const T* g = n.grad.plane(bn, 0);
      const int* am = argmax->data() + static_cast<std::size_t>(bn) * hw;
      for (std::size_t i = 0; i < hw; ++i) ga.plane(bn, am[i])[i] += g[i];
    }
  });
}

// Affine map on per-element channel vectors: x (N,Cin,1,1), w (Cout,Cin,1,1),
// b (1,Cout,1,1) -> (N,Cout,1,1).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = b.value();
  if (xv.h() != 1 || xv.w() != 1) throw UsageError("linear: x must be N x C x 1 x 1");
  if (wv.c() != xv.c()) throw UsageError("linear: weight in-features mismatch");
  const int in = xv.c(), out_c = wv.n(), bn = xv.n();
  Tensor<T> out(bn, out_c, 1, 1);
  for (int n = 0; n < bn; ++n) {
    for (int o = 0; o < out_c; ++o) {
      double acc = bv.data()[o];
      const T* wr = wv.data() + static_cast<std::size_t>(o) * in;
      const T* xr = xv.data() + static_cast<std::size_t>(n) * in;
      for (int i = 0; i < in; ++i) acc += static_cast<double>(wr[i]) * xr[i];
      out(n, o, 0, 0) = static_cast<T>(acc);
    }
  }
  return Var<T>::make(std::move(out), {x, w, b}, [x, w, b](Node<T>& n) {
    const int in = x.value().c(), out_c = w.value().n(), bn = x.value().n();
    for (int nn = 0; nn < bn; ++nn) {
      const T* g = n.grad.data() + static_cast<std::size_t>(nn) * out_c;
      if (x.requires_grad()) {
        Tensor<T>& gx = x.node()->grad_buffer();
        T* px = gx.data() + static_cast<std::size_t>(nn) * in;
        for (int o = 0; o < out_c; ++o) {
          const T* wr = w.value().data() + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) px[i] += g[o] * wr[i];
        }
      }
      if (w.requires_grad()) {
        Tensor<T>& gw = w.node()->grad_buffer();
        const T* xr = x.value().data() + static_cast<std::size_t>(nn) * in;
        for (int o = 0; o < out_c; ++o) {
          T* wr = gw.data() + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) wr[i] += g[o] * xr[i];
        }
      }
      if (b.requires_grad()) {
        Tensor<T>& gb = b.node()->grad_buffer();
        for (int o = 0; o < out_c; ++o) gb.data()[o] += g[o];
      }
    }
  });
}

// Per-(n, c) normalization over the spatial extent, no affine terms.
template <typename T>
Var<T> instance_norm(const Var<T>& a, T eps = static_cast<T>(1e-5)) {
  const Tensor<T>& x = a.value();
  Tensor<T> out = Tensor<T>::zeros_like(x);
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  auto inv_std = std::make_shared<Tensor<T>>(x.n(), x.c(), 1, 1);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* p = x.plane(n, c);
      double mean = 0;
      for (std::size_t i = 0; i < hw; ++i) mean += p[i];
      mean /= static_cast<double>(hw);
      double var = 0;
      for (std::size_t i = 0; i < hw; ++i) {
        double d = p[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(hw);
      T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      (*inv_std)(n, c, 0, 0) = inv;
      T* po = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) po[i] = (p[i] - static_cast<T>(mean)) * inv;
    }
  }
  return Var<T>::make(std::move(out), {a}, [a, inv_std](Node<T>& n) {
    Tensor<T>& ga = a.node()->grad_buffer();
    const std::size_t hw = static_cast<std::size_t>(ga.h()) * ga.w();
    const double inv_hw = 1.0 / static_cast<double>(hw);
    for (int bn = 0; bn < ga.n(); ++bn) {
      for (int c = 0; c < ga.c(); ++c) {
        const T* g = n.grad.plane(bn, c);
        const T* y = n.value.plane(bn, c);
        T inv = (*inv_std)(bn, c, 0, 0);
        double gsum = 0, gysum = 0;
        for (std::size_t i = 0; i < hw; ++i) {
          gsum += g[i];
          gysum += static_cast<double>(g[i]) * y[i];
        }
        gsum *= inv_hw;
        gysum *= inv_hw;
        T* p = ga.plane(bn, c);
        for (std::size_t i = 0; i < hw; ++i)
          p[i] += inv * static_cast<T>(g[i] - gsum - y[i] * gysum);
      }
    }
  });
}

}  // namespace usaad::ad
