#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "usaad/core/errors.hpp"
#include "usaad/core/tensor.hpp"
#include "usaad/imaging.hpp"

namespace usaad {

namespace metricdetail {

// ITU-R 601 luma on the 0..255 scale.
inline Tensor<double> luminance(const ImageBatch& img, int index) {
  Tensor<double> out(1, 1, img.h(), img.w());
  for (int y = 0; y < img.h(); ++y) {
    for (int x = 0; x < img.w(); ++x) {
      double v;
      if (img.c() == 1) {
        v = (img(index, 0, y, x) + 1.0) * 127.5;
      } else {
        v = 0.299 * (img(index, 0, y, x) + 1.0) * 127.5 +
            0.587 * (img(index, 1, y, x) + 1.0) * 127.5 +
            0.114 * (img(index, 2, y, x) + 1.0) * 127.5;
      }
      out(0, 0, y, x) = v;
    }
  }
  return out;
}

// Separable Gaussian, 7 taps, sigma 7/6, reflect-101 borders.
inline Tensor<double> gaussian7(const Tensor<double>& p) {
  static const std::array<double, 7> taps = [] {
    std::array<double, 7> t{};
    const double sigma = 7.0 / 6.0;
    double sum = 0;
    for (int i = 0; i < 7; ++i) {
      t[i] = std::exp(-0.5 * (i - 3) * (i - 3) / (sigma * sigma));
      sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  const int h = p.h(), w = p.w();
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
  };
  Tensor<double> tmp(1, 1, h, w), out(1, 1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -3; k <= 3; ++k) acc += taps[k + 3] * p(0, 0, y, reflect(x + k, w));
      tmp(0, 0, y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -3; k <= 3; ++k) acc += taps[k + 3] * tmp(0, 0, reflect(y + k, h), x);
      out(0, 0, y, x) = acc;
    }
  }
  return out;
}

// Mean-subtracted contrast-normalized coefficients of a 0..255 luma plane.
inline Tensor<double> mscn_plane(const Tensor<double>& gray) {
  Tensor<double> mu = gaussian7(gray);
  Tensor<double> sq(1, 1, gray.h(), gray.w());
  for (std::size_t i = 0; i < sq.numel(); ++i) sq.data()[i] = gray.data()[i] * gray.data()[i];
  Tensor<double> musq = gaussian7(sq);
  Tensor<double> out(1, 1, gray.h(), gray.w());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double sigma = std::sqrt(std::abs(musq.data()[i] - mu.data()[i] * mu.data()[i]));
    out.data()[i] = (gray.data()[i] - mu.data()[i]) / (sigma + 1.0);
  }
  return out;
}

inline double gamma_fn(double x) { return std::exp(std::lgamma(x)); }

constexpr double kShapeGridLo = 0.2;
constexpr double kShapeGridStep = 0.001;
constexpr int kShapeGridSize = 9801;  // 0.2 .. 10.0

inline double shape_at(int i) { return kShapeGridLo + kShapeGridStep * i; }

// r(g) = Gamma(1/g) Gamma(3/g) / Gamma(2/g)^2, tabulated over the grid.
inline const std::vector<double>& ggd_ratio_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kShapeGridSize);
    for (int i = 0; i < kShapeGridSize; ++i) {
      double g = shape_at(i);
      t[i] = std::exp(std::lgamma(1.0 / g) + std::lgamma(3.0 / g) - 2.0 * std::lgamma(2.0 / g));
    }
    return t;
  }();
  return table;
}

// R(a) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)), tabulated over the grid.
inline const std::vector<double>& aggd_ratio_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kShapeGridSize);
    for (int i = 0; i < kShapeGridSize; ++i) {
      double g = shape_at(i);
      t[i] = std::exp(2.0 * std::lgamma(2.0 / g) - std::lgamma(1.0 / g) - std::lgamma(3.0 / g));
    }
    return t;
  }();
  return table;
}

// Symmetric generalized Gaussian fit by moment matching over a shape grid.
inline void fit_ggd(const std::vector<double>& v, double& shape, double& variance) {
  double e_sq = 0, e_abs = 0;
  for (double x : v) {
    e_sq += x * x;
    e_abs += std::abs(x);
  }
  e_sq /= v.size();
  e_abs /= v.size();
  variance = e_sq;
  if (e_abs == 0) {
    shape = 10.0;
    return;
  }
  const double rho = e_sq / (e_abs * e_abs);
  const auto& table = ggd_ratio_table();
  double best = 1e300;
  for (int i = 0; i < kShapeGridSize; ++i) {
    double d = std::abs(rho - table[i]);
    if (d < best) {
      best = d;
      shape = shape_at(i);
    }
  }
}

// Asymmetric generalized Gaussian fit (shape, mean, left/right variance).
inline void fit_aggd(const std::vector<double>& v, double& alpha, double& mean, double& var_l,
                     double& var_r) {
  double lsum = 0, rsum = 0, e_abs = 0, e_sq = 0;
  std::size_t ln = 0, rn = 0;
  for (double x : v) {
    if (x < 0) {
      lsum += x * x;
      ++ln;
    } else if (x > 0) {
      rsum += x * x;
      ++rn;
    }
    e_abs += std::abs(x);
    e_sq += x * x;
  }
  e_abs /= v.size();
  e_sq /= v.size();
  const double sigma_l = ln ? std::sqrt(lsum / ln) : 0.0;
  const double sigma_r = rn ? std::sqrt(rsum / rn) : 0.0;
  var_l = sigma_l * sigma_l;
  var_r = sigma_r * sigma_r;
  if (e_sq == 0 || sigma_r == 0 || sigma_l == 0) {
    alpha = 10.0;
    mean = 0.0;
    return;
  }
  const double gammahat = sigma_l / sigma_r;
  const double rhat = e_abs * e_abs / e_sq;
  const double rhatnorm = rhat * (gammahat * gammahat * gammahat + 1.0) * (gammahat + 1.0) /
                          ((gammahat * gammahat + 1.0) * (gammahat * gammahat + 1.0));
  const auto& table = aggd_ratio_table();
  double best = 1e300;
  alpha = 0.2;
  for (int i = 0; i < kShapeGridSize; ++i) {
    double d = (table[i] - rhatnorm) * (table[i] - rhatnorm);
    if (d < best) {
      best = d;
      alpha = shape_at(i);
    }
  }
  mean = (sigma_r - sigma_l) * (gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha)) *
         std::sqrt(gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha));
}

// 18 features of one scale: GGD fit of the MSCN map, then AGGD fits of the
// four circularly-shifted neighbor products (H, V, D1, D2).
inline void scale_features(const Tensor<double>& mscn, double* feats) {
  std::vector<double> flat(mscn.data(), mscn.data() + mscn.numel());
  double shape, variance;
  fit_ggd(flat, shape, variance);
  feats[0] = shape;
  feats[1] = variance;

  const int h = mscn.h(), w = mscn.w();
  static constexpr int shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  std::vector<double> pair(static_cast<std::size_t>(h) * w);
  for (int s = 0; s < 4; ++s) {
    const int dy = shifts[s][0], dx = shifts[s][1];
    for (int y = 0; y < h; ++y) {
      const int sy = (y + dy + h) % h;
      for (int x = 0; x < w; ++x) {
        const int sx = (x + dx + w) % w;
        pair[static_cast<std::size_t>(y) * w + x] = mscn(0, 0, y, x) * mscn(0, 0, sy, sx);
      }
    }
    double alpha, mean, var_l, var_r;
    fit_aggd(pair, alpha, mean, var_l, var_r);
    feats[2 + s * 4 + 0] = alpha;
    feats[2 + s * 4 + 1] = mean;
    feats[2 + s * 4 + 2] = var_l;
    feats[2 + s * 4 + 3] = var_r;
  }
}

inline Tensor<double> half_plane(const Tensor<double>& p) {
  Tensor<double> out(1, 1, p.h() / 2, p.w() / 2);
  imagedetail::resample_plane_bicubic(p.data(), p.h(), p.w(), out.data(), out.h(), out.w());
  return out;
}

}  // namespace metricdetail

// Peak signal-to-noise ratio in dB between two batches of equal shape,
// computed on the luminance channel with the 8-bit peak convention. Capped
// at 100 dB for (near-)identical inputs.
inline double psnr(const ImageBatch& test, const ImageBatch& reference) {
  check_same_shape(test, reference, "psnr");
  double mse = 0;
  std::size_t count = 0;
  for (int n = 0; n < test.n(); ++n) {
    Tensor<double> yt = metricdetail::luminance(test, n);
    Tensor<double> yr = metricdetail::luminance(reference, n);
    for (std::size_t i = 0; i < yt.numel(); ++i) {
      double d = yt.data()[i] - yr.data()[i];
      mse += d * d;
    }
    count += yt.numel();
  }
  mse /= static_cast<double>(count);
  if (mse < 1e-10) return 100.0;
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

// MSCN coefficient map of a single-channel batch element.
inline Tensor<double> mscn(const ImageBatch& image, int index = 0) {
  if (image.c() != 1) throw UsageError("mscn: single-channel input required");
  return metricdetail::mscn_plane(metricdetail::luminance(image, index));
}

// 36-dimensional natural-scene-statistics feature vector: 18 AGGD/GGD
// features at full resolution and 18 at half resolution.
inline std::array<double, 36> nr_features(const ImageBatch& image, int index = 0) {
  if (image.h() < 32 || image.w() < 32)
    throw UsageError("nr_features: image must be at least 32x32");
  std::array<double, 36> f{};
  Tensor<double> gray = metricdetail::luminance(image, index);
  metricdetail::scale_features(metricdetail::mscn_plane(gray), f.data());
  Tensor<double> half = metricdetail::half_plane(gray);
  metricdetail::scale_features(metricdetail::mscn_plane(half), f.data() + 18);
  return f;
}

// Gaussian model of pristine-corpus features; scoring is the Mahalanobis
// distance to it (the no-reference fallback when no trained regressor is
// supplied).
struct PristineModel {
  std::array<double, 36> mean{};
  std::vector<double> cov_inv;  // 36x36 row-major
};

struct LinearModel {
  std::array<double, 36> weights{};
  double bias = 0;
};

namespace metricdetail {

// Cholesky inverse of a symmetric positive-definite 36x36 matrix.
inline std::vector<double> spd_inverse(std::vector<double> a, int n) {
  std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
      if (i == j) {
        if (s <= 0) throw NumericError("pristine covariance not positive definite");
        l[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
      } else {
        l[static_cast<std::size_t>(i) * n + j] = s / l[static_cast<std::size_t>(j) * n + j];
      }
    }
  }
  // Solve L L^T X = I column by column.
  std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> y(n);
  for (int col = 0; col < n; ++col) {
    for (int i = 0; i < n; ++i) {
      double s = i == col ? 1.0 : 0.0;
      for (int k = 0; k < i; ++k) s -= l[static_cast<std::size_t>(i) * n + k] * y[k];
      y[i] = s / l[static_cast<std::size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = y[i];
      for (int k = i + 1; k < n; ++k) s -= l[static_cast<std::size_t>(k) * n + i] * inv[static_cast<std::size_t>(k) * n + col];
      inv[static_cast<std::size_t>(i) * n + col] = s / l[static_cast<std::size_t>(i) * n + i];
    }
  }
  return inv;
}

}  // namespace metricdetail

inline PristineModel fit_pristine(const std::vector<std::array<double, 36>>& features) {
  if (features.empty()) throw UsageError("fit_pristine: no feature vectors");
  PristineModel model;
  const int n = 36;
  for (const auto& f : features)
    for (int i = 0; i < n; ++i) model.mean[i] += f[i];
  for (int i = 0; i < n; ++i) model.mean[i] /= static_cast<double>(features.size());

  std::vector<double> cov(static_cast<std::size_t>(n) * n, 0.0);
  for (const auto& f : features) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        cov[static_cast<std::size_t>(i) * n + j] +=
            (f[i] - model.mean[i]) * (f[j] - model.mean[j]);
      }
    }
  }
  for (double& v : cov) v /= static_cast<double>(features.size());
  double trace = 0;
  for (int i = 0; i < n; ++i) trace += cov[static_cast<std::size_t>(i) * n + i];
  const double ridge = 1e-6 * trace / n + 1e-9;
  for (int i = 0; i < n; ++i) cov[static_cast<std::size_t>(i) * n + i] += ridge;
  model.cov_inv = metricdetail::spd_inverse(std::move(cov), n);
  return model;
}

inline double nr_score(const std::array<double, 36>& f, const PristineModel& model) {
  if (model.cov_inv.size() != 36 * 36) throw UsageError("nr_score: missing pristine statistics");
  std::array<double, 36> d{};
  for (int i = 0; i < 36; ++i) d[i] = f[i] - model.mean[i];
  double q = 0;
  for (int i = 0; i < 36; ++i) {
    for (int j = 0; j < 36; ++j) q += d[i] * model.cov_inv[static_cast<std::size_t>(i) * 36 + j] * d[j];
  }
  double score = std::sqrt(std::max(q, 0.0));
  return std::clamp(score, 0.0, 100.0);
}

inline double nr_score(const std::array<double, 36>& f, const LinearModel& model) {
  double s = model.bias;
  for (int i = 0; i < 36; ++i) s += model.weights[i] * f[i];
  return std::clamp(s, 0.0, 100.0);
}

inline void save_nr_model(const PristineModel& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["type"] = "pristine";
  j["mean"] = std::vector<double>(m.mean.begin(), m.mean.end());
  j["cov_inv"] = m.cov_inv;
  std::ofstream f(path);
  f << j.dump() << "\n";
}

// Loads a scoring model file: either pristine statistics or a linear
// regressor trained elsewhere.
struct NrModel {
  std::optional<PristineModel> pristine;
  std::optional<LinearModel> linear;

  double score(const std::array<double, 36>& f) const {
    if (pristine) return nr_score(f, *pristine);
    if (linear) return nr_score(f, *linear);
    throw UsageError("nr_score: no scoring model or pristine statistics supplied");
  }
};

inline NrModel load_nr_model(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open scoring model: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ill-formed scoring model: " + std::string(e.what()));
  }
  NrModel m;
  const std::string type = j.at("type");
  if (type == "pristine") {
    PristineModel p;
    auto mean = j.at("mean").get<std::vector<double>>();
    if (mean.size() != 36) throw DataError("scoring model: mean must have 36 entries");
    std::copy(mean.begin(), mean.end(), p.mean.begin());
    p.cov_inv = j.at("cov_inv").get<std::vector<double>>();
    if (p.cov_inv.size() != 36 * 36) throw DataError("scoring model: cov_inv must be 36x36");
    m.pristine = std::move(p);
  } else if (type == "linear") {
    LinearModel l;
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != 36) throw DataError("scoring model: weights must have 36 entries");
    std::copy(w.begin(), w.end(), l.weights.begin());
    l.bias = j.at("bias");
    m.linear = l;
  } else {
    throw DataError("scoring model: unknown type " + type);
  }
  return m;
}

// Block-level perceptual distortion score in [0, 100], lower is better.
// 16x16 MSCN blocks; spatially active blocks are checked for noticeable
// blockiness artifacts (flat 6-pixel boundary segments) and for
// Gaussian-noise-like statistics (high variance with mesokurtic shape).
inline double piqe_score(const ImageBatch& image, int index = 0) {
  if (image.h() < 64 || image.w() < 64) throw UsageError("piqe_score: image must be at least 64x64");
  constexpr int kBlock = 16;
  constexpr double kActivityThreshold = 0.1;
  constexpr double kSegmentThreshold = 0.1;
  constexpr double kNoiseVar = 0.9;
  constexpr double kNoiseKurtosis = 4.0;

  Tensor<double> m = metricdetail::mscn_plane(metricdetail::luminance(image, index));
  const int by = m.h() / kBlock, bx = m.w() / kBlock;

  int active = 0, distorted = 0;
  std::vector<double> seg(6);
  for (int i = 0; i < by; ++i) {
    for (int j = 0; j < bx; ++j) {
      const int y0 = i * kBlock, x0 = j * kBlock;
      double sum = 0, sq = 0;
      for (int y = 0; y < kBlock; ++y) {
        for (int x = 0; x < kBlock; ++x) {
          double v = m(0, 0, y0 + y, x0 + x);
          sum += v;
          sq += v * v;
        }
      }
      const double n = kBlock * kBlock;
      const double mean = sum / n;
      const double var = std::max(sq / n - mean * mean, 0.0);
      if (var < kActivityThreshold) continue;
      ++active;

      // Blockiness: flat 6-pixel segments along the block boundary.
      bool impaired = false;
      auto segment_flat = [&](auto value_at) {
        for (int s = 0; s + 6 <= kBlock && !impaired; s += 6) {
          double ss = 0, sq2 = 0;
          for (int t = 0; t < 6; ++t) {
            double v = value_at(s + t);
            ss += v;
            sq2 += v * v;
          }
          double sv = std::max(sq2 / 6.0 - (ss / 6.0) * (ss / 6.0), 0.0);
          if (std::sqrt(sv) < kSegmentThreshold) impaired = true;
        }
      };
      segment_flat([&](int t) { return m(0, 0, y0, x0 + t); });
      segment_flat([&](int t) { return m(0, 0, y0 + kBlock - 1, x0 + t); });
      segment_flat([&](int t) { return m(0, 0, y0 + t, x0); });
      segment_flat([&](int t) { return m(0, 0, y0 + t, x0 + kBlock - 1); });

      bool noisy = false;
      if (var > kNoiseVar) {
        double m4 = 0;
        for (int y = 0; y < kBlock; ++y) {
          for (int x = 0; x < kBlock; ++x) {
            double d = m(0, 0, y0 + y, x0 + x) - mean;
            m4 += d * d * d * d;
          }
        }
        m4 /= n;
        const double kurtosis = m4 / (var * var);
        noisy = kurtosis < kNoiseKurtosis;
      }

      if (impaired || noisy) ++distorted;
    }
  }
  return 100.0 * (distorted + 1.0) / (active + 1.0);
}

struct MetricRecord {
  std::string path;
  std::optional<double> psnr_db;
  std::array<double, 36> features{};
  std::optional<double> nr;
  std::optional<double> piqe;
};

struct MetricReport {
  std::vector<MetricRecord> records;
};

inline void write_report_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write report: " + path.string());
  f << "path,psnr,nr_score,piqe\n";
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", *v);
    return std::string(buf);
  };
  double psum = 0, nsum = 0, qsum = 0;
  int pc = 0, nc = 0, qc = 0;
  for (const auto& r : report.records) {
    f << r.path << ',' << cell(r.psnr_db) << ',' << cell(r.nr) << ',' << cell(r.piqe) << '\n';
    if (r.psnr_db) {
      psum += *r.psnr_db;
      ++pc;
    }
    if (r.nr) {
      nsum += *r.nr;
      ++nc;
    }
    if (r.piqe) {
      qsum += *r.piqe;
      ++qc;
    }
  }
  f << "mean,";
  f << (pc ? cell(psum / pc) : "") << ',' << (nc ? cell(nsum / nc) : "") << ','
    << (qc ? cell(qsum / qc) : "") << '\n';
}

}  // namespace usaad
