#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "usaad/autodiff/graph.hpp"
#include "usaad/autodiff/ops.hpp"
#include "usaad/autodiff/resample.hpp"
#include "usaad/core/errors.hpp"
#include "usaad/core/tensor.hpp"

namespace usaad {

// Images move through the pipeline as float NCHW batches normalized to
// [-1, 1]. RGB channel order regardless of the codec's native order.
using ImageBatch = Tensor<float>;

struct ImagePyramid {
  std::vector<ImageBatch> levels;  // coarsest first; back() is the input
};

inline float normalize_u8(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline std::uint8_t denormalize_to_u8(float x) {
  float v = std::round((x + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f));
}

namespace imagedetail {

// Catmull-Rom cubic.
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct FilterRow {
  int start;
  std::vector<double> w;
};

// Antialiased taps: the kernel support is widened by the scale factor when
// minifying, PIL-style. Weights are renormalized so constants are preserved.
inline std::vector<FilterRow> cubic_taps(int out, int in) {
  std::vector<FilterRow> rows(out);
  const double scale = static_cast<double>(in) / out;
  const double filter_scale = std::max(scale, 1.0);
  const double support = 2.0 * filter_scale;
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support + 0.5));
    int hi = static_cast<int>(std::floor(center + support + 0.5));
    lo = std::max(lo, 0);
    hi = std::min(hi, in);
    FilterRow& r = rows[i];
    r.start = lo;
    r.w.resize(hi - lo);
    double sum = 0.0;
    for (int j = lo; j < hi; ++j) {
      double wj = cubic_kernel((j + 0.5 - center) / filter_scale);
      r.w[j - lo] = wj;
      sum += wj;
    }
    if (sum != 0.0) {
      for (double& wj : r.w) wj /= sum;
    }
  }
  return rows;
}

template <typename T>
void resample_plane_bicubic(const T* src, int h, int w, T* dst, int oh, int ow) {
  const auto ty = cubic_taps(oh, h);
  const auto tx = cubic_taps(ow, w);
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    const T* row = src + static_cast<std::size_t>(y) * w;
    double* trow = tmp.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      const auto& t = tx[x];
      double acc = 0.0;
      for (std::size_t j = 0; j < t.w.size(); ++j) acc += t.w[j] * row[t.start + j];
      trow[x] = acc;
    }
  }
  for (int y = 0; y < oh; ++y) {
    const auto& t = ty[y];
    T* drow = dst + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t j = 0; j < t.w.size(); ++j)
        acc += t.w[j] * tmp[static_cast<std::size_t>(t.start + j) * ow + x];
      drow[x] = static_cast<T>(acc);
    }
  }
}

inline ImageBatch mat_to_batch(const cv::Mat& m, int channels) {
  ImageBatch out(1, channels, m.rows, m.cols);
  if (channels == 1) {
    for (int y = 0; y < m.rows; ++y)
      for (int x = 0; x < m.cols; ++x)
        out(0, 0, y, x) = normalize_u8(m.at<std::uint8_t>(y, x));
  } else {
    for (int y = 0; y < m.rows; ++y) {
      for (int x = 0; x < m.cols; ++x) {
        const auto& px = m.at<cv::Vec3b>(y, x);  // BGR
        out(0, 0, y, x) = normalize_u8(px[2]);
        out(0, 1, y, x) = normalize_u8(px[1]);
        out(0, 2, y, x) = normalize_u8(px[0]);
      }
    }
  }
  return out;
}

inline bool image_extension(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".bmp";
}

}  // namespace imagedetail

inline std::vector<std::filesystem::path> list_image_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && imagedetail::image_extension(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Antialiased bicubic resample of every plane in the batch.
inline ImageBatch resample_bicubic(const ImageBatch& b, int oh, int ow) {
  ImageBatch out(b.n(), b.c(), oh, ow);
  for (int n = 0; n < b.n(); ++n)
    for (int c = 0; c < b.c(); ++c)
      imagedetail::resample_plane_bicubic(b.plane(n, c), b.h(), b.w(), out.plane(n, c), oh, ow);
  return out;
}

inline ImageBatch load_image(const std::filesystem::path& file, int channels) {
  cv::Mat m = cv::imread(file.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("cannot decode image: " + file.string());
  return imagedetail::mat_to_batch(m, channels);
}

// Loads every decodable image in the directory, sorted by filename, resized
// to size x size and normalized to [-1, 1]. Undecodable files are skipped
// with a warning; an empty result is an error.
inline ImageBatch load_images(const std::filesystem::path& dir, int channels, int size) {
  auto files = list_image_files(dir);
  std::vector<ImageBatch> singles;
  for (const auto& f : files) {
    cv::Mat m =
        cv::imread(f.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    if (m.empty()) {
      std::cerr << "warning: skipping undecodable file " << f << "\n";
      continue;
    }
    ImageBatch one = imagedetail::mat_to_batch(m, channels);
    if (one.h() != size || one.w() != size) one = resample_bicubic(one, size, size);
    for (float* p = one.data(); p != one.data() + one.numel(); ++p)
      *p = std::clamp(*p, -1.0f, 1.0f);
    singles.push_back(std::move(one));
  }
  if (singles.empty()) throw DataError("no decodable images in " + dir.string());
  ImageBatch batch(static_cast<int>(singles.size()), channels, size, size);
  for (std::size_t i = 0; i < singles.size(); ++i)
    std::copy_n(singles[i].data(), singles[i].numel(),
                batch.data() + i * singles[i].numel());
  return batch;
}

inline void save_image_png(const std::filesystem::path& file, const ImageBatch& b, int index = 0) {
  if (index < 0 || index >= b.n()) throw UsageError("save_image_png: index out of range");
  cv::Mat m(b.h(), b.w(), b.c() == 1 ? CV_8UC1 : CV_8UC3);
  if (b.c() == 1) {
    for (int y = 0; y < b.h(); ++y)
      for (int x = 0; x < b.w(); ++x)
        m.at<std::uint8_t>(y, x) = denormalize_to_u8(b(index, 0, y, x));
  } else {
    for (int y = 0; y < b.h(); ++y) {
      for (int x = 0; x < b.w(); ++x) {
        m.at<cv::Vec3b>(y, x) = cv::Vec3b(denormalize_to_u8(b(index, 2, y, x)),
                                          denormalize_to_u8(b(index, 1, y, x)),
                                          denormalize_to_u8(b(index, 0, y, x)));
      }
    }
  }
  if (!cv::imwrite(file.string(), m)) throw DataError("cannot write " + file.string());
}

// Coarse-to-fine pyramid: sizes M / 2^(n-1), ..., M / 2, M. The finest level
// is the untouched input; coarser levels come from successive antialiased
// bicubic halving.
inline ImagePyramid build_pyramid(const ImageBatch& batch, int n_scales) {
  if (n_scales < 1) throw UsageError("build_pyramid: n_scales must be >= 1");
  if (batch.h() != batch.w())
    throw UsageError("build_pyramid: square input required, got " + std::to_string(batch.h()) +
                     "x" + std::to_string(batch.w()));
  const int div = 1 << (n_scales - 1);
  if (batch.h() % div != 0)
    throw UsageError("build_pyramid: size " + std::to_string(batch.h()) +
                     " must be divisible by 2^(n_scales-1) = " + std::to_string(div));
  ImagePyramid pyr;
  pyr.levels.resize(n_scales);
  pyr.levels[n_scales - 1] = batch;
  for (int i = n_scales - 2; i >= 0; --i) {
    const ImageBatch& finer = pyr.levels[i + 1];
    pyr.levels[i] = resample_bicubic(finer, finer.h() / 2, finer.w() / 2);
  }
  return pyr;
}

// Bilinear resize by exactly 2x or 0.5x (the inter-scale alignment resampler).
inline ImageBatch resize(const ImageBatch& batch, double factor) {
  if (factor != 2.0 && factor != 0.5) throw UsageError("resize: factor must be 2 or 0.5");
  int oh, ow;
  if (factor == 2.0) {
    oh = batch.h() * 2;
    ow = batch.w() * 2;
  } else {
    if (batch.h() % 2 != 0 || batch.w() % 2 != 0)
      throw UsageError("resize: factor 0.5 requires even dimensions");
    oh = batch.h() / 2;
    ow = batch.w() / 2;
  }
  ad::NoGradGuard ng;
  return ad::bilinear_resize(ad::constant(batch), oh, ow).value();
}

}  // namespace usaad
