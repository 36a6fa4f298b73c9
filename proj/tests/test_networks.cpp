#include <gtest/gtest.h>

#include "param_oracle.hpp"
#include "testutil.hpp"
#include "usaad/networks.hpp"
#include "usaad/nn/layers.hpp"

using namespace usaad;
using ad::Var;

namespace {

template <typename T>
std::int64_t count_params(std::vector<nn::ParamRef<T>> refs) {
  return nn::parameter_count(refs);
}

}  // namespace

TEST(Networks, GeneratorBSShapeContract) {
  Rng rng(1);
  GeneratorBS<float> g(3, 8, FusionMode::None, 4, rng);
  Tensor<float> img = testutil::random_tensor<float>(1, 3, 64, 64, rng);
  ad::NoGradGuard ng;
  ScaleState<float> s = g.forward(ad::constant(img), std::nullopt);
  EXPECT_EQ(s.features.value().c(), 32);
  EXPECT_EQ(s.features.value().h(), 16);
  EXPECT_EQ(s.features.value().w(), 16);
  EXPECT_EQ(s.image.value().n(), 1);
  EXPECT_EQ(s.image.value().c(), 3);
  EXPECT_EQ(s.image.value().h(), 64);
  EXPECT_EQ(s.image.value().w(), 64);
}

TEST(Networks, GeneratorOutputsBounded) {
  Rng rng(2);
  GeneratorBS<float> g(3, 4, FusionMode::Saam, 4, rng);
  GeneratorSB<float> r(3, 8, rng);
  Tensor<float> img = testutil::random_tensor<float>(2, 3, 32, 32, rng);
  ad::NoGradGuard ng;
  ScaleState<float> s = g.forward(ad::constant(img), std::nullopt);
  EXPECT_GE(s.image.value().min_value(), -1.0f);
  EXPECT_LE(s.image.value().max_value(), 1.0f);
  auto reblur = r.forward(s.image);
  EXPECT_GE(reblur.value().min_value(), -1.0f);
  EXPECT_LE(reblur.value().max_value(), 1.0f);
  EXPECT_TRUE(s.image.value().all_finite());
}

TEST(Networks, RecurrenceAcrossScalesRoundTripShapes) {
  Rng rng(3);
  GeneratorBS<float> g(3, 4, FusionMode::Saam, 4, rng);
  GeneratorSB<float> r(3, 8, rng);
  ad::NoGradGuard ng;
  std::optional<ScaleState<float>> prev;
  for (int size : {16, 32, 64}) {
    Tensor<float> img = testutil::random_tensor<float>(1, 3, size, size, rng);
    ScaleState<float> s = g.forward(ad::constant(img), prev);
    EXPECT_EQ(s.image.value().h(), size);
    auto reblurred = r.forward(s.image);
    EXPECT_EQ(reblurred.value().h(), size);
    EXPECT_EQ(reblurred.value().c(), 3);
    prev = s;
  }
}

TEST(Networks, AddFusionWithZeroFeaturesEqualsNone) {
  Rng rng(4);
  GeneratorBS<float> g(3, 4, FusionMode::Add, 4, rng);
  Tensor<float> img = testutil::random_tensor<float>(1, 3, 32, 32, rng);
  ad::NoGradGuard ng;

  ScaleState<float> none_like = g.forward(ad::constant(img), std::nullopt);
  ScaleState<float> zero_prev;
  zero_prev.image = ad::constant(Tensor<float>(1, 3, 16, 16));
  zero_prev.features = ad::constant(Tensor<float>(1, 16, 4, 4));
  ScaleState<float> with_zeros = g.forward(ad::constant(img), zero_prev);
  // Zero prev features add nothing to the decoder input, but the encoder
  // sees upsample(0) instead of the image itself, so compare the fusion
  // stage in isolation: same decoder input channel count and the added map
  // contributes zero.
  EXPECT_EQ(none_like.features.value().c(), with_zeros.features.value().c());

  // Direct check of the fusion op itself.
  Tensor<float> f = testutil::random_tensor<float>(1, 16, 4, 4, rng);
  auto fused = fuse_baseline(ad::constant(f), ad::constant(Tensor<float>(1, 16, 4, 4)),
                             FusionMode::Add);
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_EQ(fused.value().data()[i], f.data()[i]);
}

TEST(Networks, ConcatChannelCounts) {
  Rng rng(5);
  Tensor<float> a = testutil::random_tensor<float>(1, 16, 4, 4, rng);
  Tensor<float> b = testutil::random_tensor<float>(1, 16, 4, 4, rng);
  auto fused = fuse_baseline(ad::constant(a), ad::constant(b), FusionMode::Concat);
  EXPECT_EQ(fused.value().c(), 32);
}

TEST(Networks, ChannelAttentionWithUnitGateEqualsConcat) {
  Rng rng(6);
  ChannelGate<float> gate(16, 4, rng);
  // Saturate the gate at 1: zero weights, large positive bias.
  gate.fc1().weight().value().fill(0.0f);
  gate.fc1().bias().value().fill(0.0f);
  gate.fc2().weight().value().fill(0.0f);
  gate.fc2().bias().value().fill(40.0f);
  Tensor<float> a = testutil::random_tensor<float>(1, 16, 4, 4, rng);
  Tensor<float> b = testutil::random_tensor<float>(1, 16, 4, 4, rng);
  auto ca = fuse_baseline(ad::constant(a), ad::constant(b), FusionMode::ChannelAttention, &gate);
  auto cc = fuse_baseline(ad::constant(a), ad::constant(b), FusionMode::Concat);
  ASSERT_TRUE(ca.value().same_shape(cc.value()));
  for (std::size_t i = 0; i < ca.value().numel(); ++i)
    EXPECT_EQ(ca.value().data()[i], cc.value().data()[i]);
}

TEST(Networks, FuseShapeMismatchRejected) {
  Tensor<float> a(1, 16, 4, 4, 0.0f), b(1, 16, 8, 8, 0.0f);
  EXPECT_THROW(fuse_baseline(ad::constant(a), ad::constant(b), FusionMode::Add), UsageError);
}

TEST(Networks, GeneratorSBShapePreservedAndLightweight) {
  Rng rng(7);
  GeneratorSB<float> r(3, 64, rng);
  GeneratorBS<float> g(3, 64, FusionMode::Saam, 16, rng);
  Tensor<float> img = testutil::random_tensor<float>(1, 3, 256, 256, rng);
  {
    ad::NoGradGuard ng;
    auto out = r.forward(ad::constant(img));
    EXPECT_TRUE(out.value().same_shape(img));
  }
  std::vector<nn::ParamRef<float>> gp, rp;
  g.params(gp);
  r.params(rp);
  EXPECT_LT(nn::parameter_count(rp), nn::parameter_count(gp));
}

TEST(Networks, GeneratorSBGradcheck) {
  Rng rng(8);
  GeneratorSB<double> r(1, 3, rng);
  Tensor<double> img = testutil::random_tensor<double>(1, 1, 8, 8, rng);
  auto x = ad::constant(img);
  auto loss = [&] {
    auto y = r.forward(x);
    return ad::mean_all(ad::mul(y, y));
  };
  std::vector<nn::ParamRef<double>> refs;
  r.params(refs);
  std::vector<ad::Var<double>*> params;
  for (auto& p : refs) params.push_back(p.var);
  EXPECT_LT(testutil::max_rel_grad_error(loss, params), 1e-3);
}

TEST(Networks, DiscriminatorPatchMap256To30) {
  Rng rng(9);
  PatchDiscriminator<float> d("d_s", 3, 64, 3, rng);
  Tensor<float> img = testutil::random_tensor<float>(1, 3, 256, 256, rng);
  ad::NoGradGuard ng;
  auto scores = d.forward(ad::constant(img));
  EXPECT_EQ(scores.value().n(), 1);
  EXPECT_EQ(scores.value().c(), 1);
  EXPECT_EQ(scores.value().h(), 30);
  EXPECT_EQ(scores.value().w(), 30);
}

TEST(Networks, DiscriminatorFullyConvolutionalGrowth) {
  Rng rng(10);
  PatchDiscriminator<float> d("d_s", 3, 16, 3, rng);
  ad::NoGradGuard ng;
  auto small = d.forward(ad::constant(Tensor<float>(1, 3, 64, 64, 0.1f)));
  auto large = d.forward(ad::constant(Tensor<float>(1, 3, 128, 128, 0.1f)));
  EXPECT_GT(large.value().h(), small.value().h());
  EXPECT_GT(large.value().w(), small.value().w());
}

TEST(Networks, DiscriminatorRejectsTooSmallInput) {
  Rng rng(11);
  PatchDiscriminator<float> d("d_s", 3, 16, 3, rng);
  ad::NoGradGuard ng;
  EXPECT_EQ(d.min_input(), 24);
  EXPECT_THROW(d.forward(ad::constant(Tensor<float>(1, 3, 16, 16, 0.0f))), UsageError);
  EXPECT_NO_THROW(d.forward(ad::constant(Tensor<float>(1, 3, 24, 24, 0.0f))));
}

TEST(Networks, DiscriminatorDepthClampForSmallScales) {
  EXPECT_EQ(PatchDiscriminator<float>::max_stride2_layers(64), 3);
  EXPECT_EQ(PatchDiscriminator<float>::max_stride2_layers(16), 2);
  EXPECT_EQ(PatchDiscriminator<float>::max_stride2_layers(8), 1);
  EXPECT_THROW(PatchDiscriminator<float>::max_stride2_layers(4), UsageError);
}

TEST(Networks, ParameterCountsMatchOracle) {
  Rng rng(12);
  for (FusionMode m : {FusionMode::None, FusionMode::Add, FusionMode::Concat,
                       FusionMode::ChannelAttention, FusionMode::SpatialAttention,
                       FusionMode::Saam}) {
    GeneratorBS<float> g(3, 8, m, 4, rng);
    std::vector<nn::ParamRef<float>> refs;
    g.params(refs);
    EXPECT_EQ(nn::parameter_count(refs), testutil::expected_generator_bs_params(3, 8, m, 4))
        << fusion_name(m);
  }
  {
    GeneratorSB<float> r(3, 16, rng);
    std::vector<nn::ParamRef<float>> refs;
    r.params(refs);
    EXPECT_EQ(nn::parameter_count(refs), testutil::expected_generator_sb_params(3, 16));
  }
  {
    PatchDiscriminator<float> d("d_b", 3, 64, 3, rng);
    std::vector<nn::ParamRef<float>> refs;
    d.params(refs);
    EXPECT_EQ(nn::parameter_count(refs), testutil::expected_discriminator_params(3, 64, 3));
  }
}

TEST(Networks, SaamVsNoneParameterDelta) {
  // saam differs from none by the two Phi bottlenecks plus the widened
  // first decoder layer.
  Rng r1(13), r2(13);
  GeneratorBS<float> g_none(3, 8, FusionMode::None, 4, r1);
  GeneratorBS<float> g_saam(3, 8, FusionMode::Saam, 4, r2);
  std::vector<nn::ParamRef<float>> pn, ps;
  g_none.params(pn);
  g_saam.params(ps);
  const int c = 32, hidden = 8, b = 8;
  std::int64_t phi = 2 * (testutil::linear_params(c, hidden) + testutil::linear_params(hidden, c));
  std::int64_t widen = testutil::convt_params(2 * c, 2 * b, 3) - testutil::convt_params(c, 2 * b, 3);
  EXPECT_EQ(nn::parameter_count(ps) - nn::parameter_count(pn), phi + widen);
}

TEST(Networks, SharedParametersAcrossScalesByIdentity) {
  Rng rng(14);
  GeneratorBS<float> g(3, 4, FusionMode::Saam, 4, rng);
  ad::NoGradGuard ng;
  std::optional<ScaleState<float>> prev;
  Tensor<float> coarse = testutil::random_tensor<float>(1, 3, 16, 16, rng);
  ScaleState<float> s1 = g.forward(ad::constant(coarse), prev);
  // mutate one weight; the change must show at the next scale immediately
  std::vector<nn::ParamRef<float>> refs;
  g.params(refs);
  Tensor<float> fine = testutil::random_tensor<float>(1, 3, 32, 32, rng);
  ScaleState<float> before = g.forward(ad::constant(fine), s1);
  for (auto& p : refs)
    if (p.name == "g_bs.head.b")
      for (std::size_t i = 0; i < p.var->value().numel(); ++i)
        p.var->value().data()[i] += 0.25f;
  ScaleState<float> after = g.forward(ad::constant(fine), s1);
  double diff = 0;
  for (std::size_t i = 0; i < before.image.value().numel(); ++i)
    diff += std::abs(after.image.value().data()[i] - before.image.value().data()[i]);
  EXPECT_GT(diff, 0.0);
}
