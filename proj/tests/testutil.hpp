#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "usaad/autodiff/graph.hpp"
#include "usaad/core/random.hpp"
#include "usaad/core/tensor.hpp"

namespace testutil {

// Central finite differences against analytic gradients over every listed
// parameter. loss_fn must rebuild the graph from current parameter values.
// Returns the worst relative error; at most max_checks elements per tensor
// are probed (spread evenly).
inline double max_rel_grad_error(const std::function<usaad::ad::Var<double>()>& loss_fn,
                                 const std::vector<usaad::ad::Var<double>*>& params,
                                 double step = 1e-3, int max_checks = 64) {
  using usaad::ad::backward;
  for (auto* p : params) p->zero_grad();
  usaad::ad::Var<double> loss = loss_fn();
  backward(loss);

  std::vector<usaad::Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) {
    if (p->has_grad()) {
      analytic.push_back(p->grad());
    } else {
      analytic.push_back(usaad::Tensor<double>::zeros_like(p->value()));
    }
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    usaad::ad::Var<double>& p = *params[pi];
    const std::size_t n = p.value().numel();
    const std::size_t stride = std::max<std::size_t>(1, n / max_checks);
    for (std::size_t i = 0; i < n; i += stride) {
      double saved = p.value().data()[i];
      p.value().data()[i] = saved + step;
      double f_plus = loss_fn().value().data()[0];
      p.value().data()[i] = saved - step;
      double f_minus = loss_fn().value().data()[0];
      p.value().data()[i] = saved;
      double numeric = (f_plus - f_minus) / (2.0 * step);
      double a = analytic[pi].data()[i];
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

template <typename T>
usaad::Tensor<T> random_tensor(int n, int c, int h, int w, usaad::Rng& rng, double lo = -1.0,
                               double hi = 1.0) {
  usaad::Tensor<T> t(n, c, h, w);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Piecewise-smooth scene with sharp-edged rectangles and disks over a
// gradient background; the kind of content whose blur is visually obvious.
inline usaad::Tensor<float> synth_scene(int channels, int size, std::uint64_t seed) {
  usaad::Rng rng(seed);
  usaad::Tensor<float> img(1, channels, size, size);
  std::vector<double> base(channels), gx(channels), gy(channels);
  for (int c = 0; c < channels; ++c) {
    base[c] = rng.uniform(-0.5, 0.5);
    gx[c] = rng.uniform(-0.8, 0.8) / size;
    gy[c] = rng.uniform(-0.8, 0.8) / size;
  }
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img(0, c, y, x) = static_cast<float>(base[c] + gx[c] * x + gy[c] * y);

  const int n_shapes = 6;
  for (int s = 0; s < n_shapes; ++s) {
    bool disk = rng.uniform() < 0.5;
    int cx = rng.uniform_int(size / 8, size - size / 8 - 1);
    int cy = rng.uniform_int(size / 8, size - size / 8 - 1);
    int r = rng.uniform_int(size / 12, size / 4);
    std::vector<double> color(channels);
    for (int c = 0; c < channels; ++c) color[c] = rng.uniform(-0.95, 0.95);
    for (int y = std::max(0, cy - r); y < std::min(size, cy + r + 1); ++y) {
      for (int x = std::max(0, cx - r); x < std::min(size, cx + r + 1); ++x) {
        bool inside = disk ? ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) : true;
        if (inside)
          for (int c = 0; c < channels; ++c) img(0, c, y, x) = static_cast<float>(color[c]);
      }
    }
  }
  for (std::size_t i = 0; i < img.numel(); ++i)
    img.data()[i] = std::clamp(img.data()[i], -1.0f, 1.0f);
  return img;
}

// Textured scene (sinusoid mixture): every 16x16 block has structure, which
// keeps no-reference block statistics well-behaved.
inline usaad::Tensor<float> synth_texture(int channels, int size, std::uint64_t seed) {
  usaad::Rng rng(seed);
  usaad::Tensor<float> img(1, channels, size, size);
  const int waves = 6;
  std::vector<double> fx(waves), fy(waves), ph(waves), amp(waves);
  for (int k = 0; k < waves; ++k) {
    fx[k] = rng.uniform(0.05, 0.45);
    fy[k] = rng.uniform(0.05, 0.45);
    ph[k] = rng.uniform(0.0, 6.28318);
    amp[k] = rng.uniform(0.1, 0.35);
  }
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = 0;
        for (int k = 0; k < waves; ++k)
          v += amp[k] * std::sin(2.0 * 3.14159265358979 * (fx[k] * x + fy[k] * y) + ph[k] + c);
        img(0, c, y, x) = static_cast<float>(std::clamp(v, -0.98, 0.98));
      }
    }
  }
  return img;
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& hint) {
    static std::uint64_t counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("usaad_" + hint + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testutil
