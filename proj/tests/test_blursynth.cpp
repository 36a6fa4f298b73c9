#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

#include <json.hpp>

#include "testutil.hpp"
#include "usaad/blursynth.hpp"

using namespace usaad;

namespace {

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST(BlurSynth, ZeroIntensityIsCenteredDelta) {
  BlurKernel k = sample_kernel(123, 9, 0.0);
  int center = 4;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x)
      EXPECT_DOUBLE_EQ(k.at(y, x), (y == center && x == center) ? 1.0 : 0.0);
}

TEST(BlurSynth, KernelInvariants) {
  for (std::uint64_t seed : {1ull, 2ull, 77ull, 991ull}) {
    for (double intensity : {0.1, 0.5, 1.0}) {
      BlurKernel k = sample_kernel(seed, 21, intensity);
      double sum = std::accumulate(k.w.begin(), k.w.end(), 0.0);
      EXPECT_NEAR(sum, 1.0, 1e-6);
      for (double v : k.w) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(BlurSynth, KernelDeterminism) {
  BlurKernel a = sample_kernel(42, 15, 0.7);
  BlurKernel b = sample_kernel(42, 15, 0.7);
  ASSERT_EQ(a.w.size(), b.w.size());
  for (std::size_t i = 0; i < a.w.size(); ++i) EXPECT_EQ(a.w[i], b.w[i]);
}

TEST(BlurSynth, EvenSizeRejected) {
  EXPECT_THROW(sample_kernel(1, 8, 0.5), UsageError);
  EXPECT_THROW(sample_kernel(1, 65, 0.5), UsageError);
  EXPECT_THROW(sample_kernel(1, 9, 1.5), UsageError);
}

TEST(BlurSynth, SupportGrowsWithIntensity) {
  // Rank correlation between intensity and kernel support area over many
  // seeds; requires > 0.5.
  const int n = 1000;
  std::vector<double> intensities(n), support(n);
  for (int i = 0; i < n; ++i) {
    double intensity = (i % 10) / 10.0;
    BlurKernel k = sample_kernel(5000 + i, 15, intensity);
    int cells = 0;
    for (double v : k.w)
      if (v > 1e-12) ++cells;
    intensities[i] = intensity;
    support[i] = cells;
  }
  auto ranks = [](const std::vector<double>& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
    return r;
  };
  std::vector<double> ri = ranks(intensities), rs = ranks(support);
  double mi = std::accumulate(ri.begin(), ri.end(), 0.0) / n;
  double ms = std::accumulate(rs.begin(), rs.end(), 0.0) / n;
  double num = 0, di = 0, ds = 0;
  for (int i = 0; i < n; ++i) {
    num += (ri[i] - mi) * (rs[i] - ms);
    di += (ri[i] - mi) * (ri[i] - mi);
    ds += (rs[i] - ms) * (rs[i] - ms);
  }
  double spearman = num / std::sqrt(di * ds);
  EXPECT_GT(spearman, 0.5);
}

TEST(BlurSynth, DeltaKernelIsIdentity) {
  ImageBatch img = testutil::synth_scene(3, 32, 11);
  BlurKernel delta = sample_kernel(0, 5, 0.0);
  ImageBatch out = apply_blur(img, delta);
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_FLOAT_EQ(out.data()[i], img.data()[i]);
}

TEST(BlurSynth, ConstantImagePreserved) {
  ImageBatch img(1, 3, 32, 32, 0.3f);
  BlurKernel k = sample_kernel(9, 9, 0.8);
  ImageBatch out = apply_blur(img, k);
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out.data()[i], 0.3f, 1e-6f);
}

TEST(BlurSynth, UniformKernelOnImpulse) {
  // 5x5 uniform kernel on a unit impulse -> 5x5 patch of 1/25.
  ImageBatch img(1, 1, 16, 16, 0.0f);
  img(0, 0, 8, 8) = 1.0f;
  BlurKernel k;
  k.size = 5;
  k.w.assign(25, 1.0 / 25.0);
  ImageBatch out = apply_blur(img, k);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      bool inside = std::abs(y - 8) <= 2 && std::abs(x - 8) <= 2;
      EXPECT_NEAR(out(0, 0, y, x), inside ? 1.0f / 25.0f : 0.0f, 1e-7f);
    }
  }
}

TEST(BlurSynth, MeanEnergyPreserved) {
  ImageBatch img = testutil::synth_scene(3, 64, 12);
  BlurKernel k = sample_kernel(3, 11, 0.6);
  ImageBatch out = apply_blur(img, k);
  double m_in = 0, m_out = 0;
  for (std::size_t i = 0; i < img.numel(); ++i) {
    m_in += img.data()[i];
    m_out += out.data()[i];
  }
  EXPECT_NEAR(m_in / img.numel(), m_out / out.numel(), 1e-3);
}

TEST(BlurSynth, KernelLargerThanImageRejected) {
  ImageBatch img(1, 1, 8, 8, 0.0f);
  BlurKernel k = sample_kernel(1, 9, 0.5);
  EXPECT_THROW(apply_blur(img, k), DataError);
}

TEST(BlurSynth, CorpusSplitAndDisjoint) {
  testutil::TempDir src("corpus_src");
  testutil::TempDir out("corpus_out");
  for (int i = 0; i < 10; ++i)
    save_image_png(src.path / ("s" + std::to_string(i) + ".png"),
                   testutil::synth_scene(3, 48, 200 + i));
  UnpairedCorpus corpus = build_corpus(src.path, out.path, 7, {9, 0.5});
  int blur = 0, sharp = 0;
  std::set<std::string> blur_srcs, sharp_srcs;
  for (const auto& e : corpus.entries) {
    if (e.group == "blur") {
      ++blur;
      blur_srcs.insert(e.src);
    } else {
      ++sharp;
      sharp_srcs.insert(e.src);
    }
  }
  EXPECT_EQ(blur, 5);
  EXPECT_EQ(sharp, 5);
  for (const auto& s : blur_srcs) EXPECT_EQ(sharp_srcs.count(s), 0u);
  EXPECT_TRUE(std::filesystem::exists(corpus.manifest_path));
}

TEST(BlurSynth, CorpusDeterminism) {
  testutil::TempDir src("corpus_det_src");
  for (int i = 0; i < 6; ++i)
    save_image_png(src.path / ("s" + std::to_string(i) + ".png"),
                   testutil::synth_scene(3, 48, 300 + i));
  testutil::TempDir out1("corpus_det1");
  testutil::TempDir out2("corpus_det2");
  UnpairedCorpus c1 = build_corpus(src.path, out1.path, 99, {9, 0.5});
  UnpairedCorpus c2 = build_corpus(src.path, out2.path, 99, {9, 0.5});
  // identical manifests modulo the output directory prefix
  auto strip = [](std::string s, const std::string& dir) {
    std::size_t pos;
    while ((pos = s.find(dir)) != std::string::npos) s.erase(pos, dir.size());
    return s;
  };
  std::string m1 = strip(file_bytes(c1.manifest_path), out1.path.string());
  std::string m2 = strip(file_bytes(c2.manifest_path), out2.path.string());
  EXPECT_EQ(m1, m2);
  for (const auto& e1 : c1.entries) {
    if (e1.group != "blur") continue;
    std::filesystem::path p1 = e1.dst;
    std::filesystem::path p2 = out2.path / "blur" / p1.filename();
    EXPECT_EQ(file_bytes(p1), file_bytes(p2)) << p1;
  }
}

TEST(BlurSynth, PreBlurredModeAppliesNoKernel) {
  testutil::TempDir sharp_src("pre_sharp");
  testutil::TempDir blur_src("pre_blur");
  testutil::TempDir out("pre_out");
  for (int i = 0; i < 3; ++i) {
    save_image_png(sharp_src.path / ("s" + std::to_string(i) + ".png"),
                   testutil::synth_scene(3, 48, 400 + i));
    save_image_png(blur_src.path / ("b" + std::to_string(i) + ".png"),
                   testutil::synth_scene(3, 48, 500 + i));
  }
  UnpairedCorpus corpus = build_corpus(sharp_src.path, out.path, 1, {9, 0.5}, true, blur_src.path);
  for (const auto& e : corpus.entries) {
    EXPECT_EQ(e.kernel_seed, -1);
    if (e.group == "blur") {
      // bytes copied untouched
      EXPECT_EQ(file_bytes(e.src), file_bytes(e.dst));
    }
  }
  nlohmann::json manifest;
  std::ifstream(corpus.manifest_path) >> manifest;
  EXPECT_EQ(manifest["kernel_cfg"]["mode"], "external");
}

TEST(BlurSynth, TooFewSourcesRejected) {
  testutil::TempDir src("corpus_small");
  testutil::TempDir out("corpus_small_out");
  save_image_png(src.path / "only.png", testutil::synth_scene(3, 48, 1));
  EXPECT_THROW(build_corpus(src.path, out.path, 1, {9, 0.5}), DataError);
}
