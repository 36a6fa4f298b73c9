#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "usaad/autodiff/conv.hpp"
#include "usaad/core/errors.hpp"
#include "usaad/core/random.hpp"
#include "usaad/imaging.hpp"

namespace usaad {

// Nonnegative k x k point-spread function summing to one.
struct BlurKernel {
  int size = 0;
  std::vector<double> w;  // row-major size x size

  double& at(int y, int x) { return w[static_cast<std::size_t>(y) * size + x]; }
  double at(int y, int x) const { return w[static_cast<std::size_t>(y) * size + x]; }
};

struct KernelConfig {
  int size = 21;
  double intensity = 0.5;
};

// Random camera-shake kernel: a Markov random-walk trajectory (Gaussian
// heading increments, occasional impulsive turns) splatted sub-pixel into the
// kernel grid. intensity 0 degenerates to a centered delta.
inline BlurKernel sample_kernel(std::uint64_t seed, int size, double intensity) {
  if (size % 2 == 0) throw UsageError("sample_kernel: size must be odd");
  if (size < 3 || size > 63) throw UsageError("sample_kernel: size must be in [3, 63]");
  if (intensity < 0.0 || intensity > 1.0)
    throw UsageError("sample_kernel: intensity must be in [0, 1]");

  Rng rng(seed);
  const int steps = std::max(size * size, 64);
  const double radius = (size - 1) / 2.0;
  // RMS displacement of the walk ~ step_len * sqrt(steps); scale it so the
  // trajectory fills about `intensity` of the kernel radius.
  const double step_len = intensity * radius / std::sqrt(static_cast<double>(steps));
  const double turn_sigma = 0.25 + 1.5 * intensity;
  const double impulse_prob = 0.02;

  std::vector<double> xs(steps), ys(steps);
  double x = 0.0, y = 0.0;
  double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int t = 0; t < steps; ++t) {
    xs[t] = x;
    ys[t] = y;
    if (rng.uniform() < impulse_prob) {
      heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    } else {
      heading += rng.normal() * turn_sigma;
    }
    x += step_len * std::cos(heading);
    y += step_len * std::sin(heading);
  }

  // Center the trajectory's mass, then clamp inside the grid.
  double mx = 0.0, my = 0.0;
  for (int t = 0; t < steps; ++t) {
    mx += xs[t];
    my += ys[t];
  }
  mx /= steps;
  my /= steps;

  BlurKernel kern;
  kern.size = size;
  kern.w.assign(static_cast<std::size_t>(size) * size, 0.0);
  const double center = radius;  // integer for odd sizes
  for (int t = 0; t < steps; ++t) {
    double px = std::clamp(xs[t] - mx + center, 0.0, size - 1.0);
    double py = std::clamp(ys[t] - my + center, 0.0, size - 1.0);
    int x0 = static_cast<int>(std::floor(px));
    int y0 = static_cast<int>(std::floor(py));
    double fx = px - x0, fy = py - y0;
    int x1 = std::min(x0 + 1, size - 1);
    int y1 = std::min(y0 + 1, size - 1);
    kern.at(y0, x0) += (1 - fy) * (1 - fx);
    kern.at(y0, x1) += (1 - fy) * fx;
    kern.at(y1, x0) += fy * (1 - fx);
    kern.at(y1, x1) += fy * fx;
  }

  double sum = 0.0;
  for (double v : kern.w) sum += v;
  for (double& v : kern.w) v /= sum;
  return kern;
}

// 2-D convolution with reflect padding; output clamped to the valid range.
inline ImageBatch apply_blur(const ImageBatch& img, const BlurKernel& kern) {
  const int k = kern.size;
  if (k > img.h() || k > img.w())
    throw DataError("apply_blur: kernel " + std::to_string(k) + " larger than image " +
                    std::to_string(img.h()) + "x" + std::to_string(img.w()));
  const int r = k / 2;
  ImageBatch out(img.n(), img.c(), img.h(), img.w());
  for (int n = 0; n < img.n(); ++n) {
    for (int c = 0; c < img.c(); ++c) {
      const float* src = img.plane(n, c);
      float* dst = out.plane(n, c);
      for (int y = 0; y < img.h(); ++y) {
        for (int x = 0; x < img.w(); ++x) {
          double acc = 0.0;
          for (int ky = 0; ky < k; ++ky) {
            int sy = ad::detail::reflect_index(y + ky - r, img.h());
            const float* row = src + static_cast<std::size_t>(sy) * img.w();
            const double* krow = kern.w.data() + static_cast<std::size_t>(ky) * k;
            for (int kx = 0; kx < k; ++kx) {
              int sx = ad::detail::reflect_index(x + kx - r, img.w());
              acc += krow[kx] * row[sx];
            }
          }
          dst[static_cast<std::size_t>(y) * img.w() + x] =
              std::clamp(static_cast<float>(acc), -1.0f, 1.0f);
        }
      }
    }
  }
  return out;
}

struct CorpusEntry {
  std::string src;
  std::string dst;
  std::string group;  // "blur" | "sharp"
  std::int64_t kernel_seed = -1;  // -1 when no kernel was applied
};

struct UnpairedCorpus {
  std::filesystem::path blur_dir;
  std::filesystem::path sharp_dir;
  std::filesystem::path manifest_path;
  std::vector<CorpusEntry> entries;
};

inline nlohmann::json corpus_manifest_json(std::uint64_t seed, const KernelConfig& cfg,
                                           bool external_blur,
                                           const std::vector<CorpusEntry>& entries) {
  nlohmann::json j;
  j["seed"] = seed;
  j["kernel_cfg"] = {{"size", cfg.size},
                     {"intensity", cfg.intensity},
                     {"mode", external_blur ? "external" : "synthetic"}};
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"src", e.src}, {"dst", e.dst}, {"group", e.group}, {"kernel_seed", e.kernel_seed}});
  }
  j["entries"] = arr;
  return j;
}

// Splits the sources 50/50 by seeded shuffle; blurs one half with
// independently seeded kernels; copies the other half untouched. With
// pre_blurred the blur half is copied as-is (externally blurred corpora).
// A separate blur_src directory may supply the pre-blurred half directly.
inline UnpairedCorpus build_corpus(const std::filesystem::path& src_dir,
                                   const std::filesystem::path& out_dir, std::uint64_t seed,
                                   const KernelConfig& cfg, bool pre_blurred = false,
                                   const std::filesystem::path& blur_src = {}) {
  namespace fs = std::filesystem;
  auto sources = list_image_files(src_dir);
  std::vector<fs::path> blur_sources;
  std::vector<fs::path> sharp_sources;

  if (!blur_src.empty()) {
    if (!pre_blurred) throw UsageError("build_corpus: blur_src requires pre_blurred");
    blur_sources = list_image_files(blur_src);
    sharp_sources = sources;
    if (blur_sources.empty() || sharp_sources.empty())
      throw DataError("build_corpus: empty source group");
  } else {
    if (sources.size() < 2) throw DataError("build_corpus: need at least 2 source images");
    Rng rng(seed);
    rng.shuffle(sources.begin(), sources.end());
    const std::size_t half = sources.size() / 2;
    blur_sources.assign(sources.begin(), sources.begin() + half);
    sharp_sources.assign(sources.begin() + half, sources.end());
  }

  UnpairedCorpus corpus;
  corpus.blur_dir = out_dir / "blur";
  corpus.sharp_dir = out_dir / "sharp";
  corpus.manifest_path = out_dir / "manifest.json";
  fs::create_directories(corpus.blur_dir);
  fs::create_directories(corpus.sharp_dir);

  for (std::size_t i = 0; i < blur_sources.size(); ++i) {
    const fs::path& src = blur_sources[i];
    CorpusEntry e;
    e.src = src.string();
    e.group = "blur";
    if (pre_blurred) {
      fs::path dst = corpus.blur_dir / src.filename();
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
      e.dst = dst.string();
      e.kernel_seed = -1;
    } else {
      std::uint64_t kseed = Rng::mix(seed, i);
      BlurKernel kern = sample_kernel(kseed, cfg.size, cfg.intensity);
      ImageBatch img = load_image(src, 3);
      fs::path dst = corpus.blur_dir / (src.stem().string() + ".png");
      save_image_png(dst, apply_blur(img, kern));
      e.dst = dst.string();
      e.kernel_seed = static_cast<std::int64_t>(kseed);
    }
    corpus.entries.push_back(std::move(e));
  }
  for (const fs::path& src : sharp_sources) {
    fs::path dst = corpus.sharp_dir / src.filename();
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    corpus.entries.push_back({src.string(), dst.string(), "sharp", -1});
  }

  std::ofstream mf(corpus.manifest_path);
  mf << corpus_manifest_json(seed, cfg, pre_blurred, corpus.entries).dump(2) << "\n";
  return corpus;
}

}  // namespace usaad
