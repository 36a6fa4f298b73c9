#include <gtest/gtest.h>

#include "testutil.hpp"
#include "usaad/saam.hpp"

using namespace usaad;
using ad::Var;

namespace {

template <typename T>
void zero_transform(AttentionTransform<T>& phi) {
  phi.fc1().weight().value().fill(T{});
  phi.fc1().bias().value().fill(T{});
  phi.fc2().weight().value().fill(T{});
  phi.fc2().bias().value().fill(T{});
}

}  // namespace

TEST(Saam, ChannelMeanConstant) {
  Tensor<double> t(1, 2, 4, 4, 2.0);
  auto v = channel_mean(ad::constant(t));
  EXPECT_DOUBLE_EQ(v.value()(0, 0, 0, 0), 2.0);
  EXPECT_DOUBLE_EQ(v.value()(0, 1, 0, 0), 2.0);
}

TEST(Saam, ChannelMeanHandComputed) {
  Tensor<double> t(1, 1, 2, 2);
  t(0, 0, 0, 0) = 1;
  t(0, 0, 0, 1) = 3;
  t(0, 0, 1, 0) = 5;
  t(0, 0, 1, 1) = 7;
  auto v = channel_mean(ad::constant(t));
  EXPECT_DOUBLE_EQ(v.value()(0, 0, 0, 0), 4.0);
}

TEST(Saam, ChannelMeanPermutationInvariant) {
  Rng rng(3);
  Tensor<double> t = testutil::random_tensor<double>(1, 3, 5, 5, rng);
  Tensor<double> p = t;
  // permute each channel's pixels independently (reverse order)
  for (int c = 0; c < 3; ++c) {
    double* plane = p.plane(0, c);
    std::reverse(plane, plane + 25);
  }
  auto v1 = channel_mean(ad::constant(t));
  auto v2 = channel_mean(ad::constant(p));
  for (int c = 0; c < 3; ++c)
    EXPECT_NEAR(v1.value()(0, c, 0, 0), v2.value()(0, c, 0, 0), 1e-12);
}

TEST(Saam, AttentionCoefficientsZeroGivesHalf) {
  Tensor<double> zero(1, 4, 1, 1, 0.0);
  Tensor<double> any(1, 4, 1, 1, 1.7);
  auto beta = attention_coefficients(ad::constant(zero), ad::constant(any));
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(beta.value()(0, c, 0, 0), 0.5);
}

TEST(Saam, AttentionCoefficientsClosedForm) {
  Tensor<double> hi(1, 2, 1, 1);
  hi(0, 0, 0, 0) = 1.0;
  hi(0, 1, 0, 0) = -1.0;
  Tensor<double> lo(1, 2, 1, 1, 1.0);
  auto beta = attention_coefficients(ad::constant(hi), ad::constant(lo));
  EXPECT_NEAR(beta.value()(0, 0, 0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(beta.value()(0, 1, 0, 0), 0.2689, 1e-4);
}

TEST(Saam, AlignedChannelsGetMoreAttention) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    double a = rng.uniform(0.05, 2.0) * (rng.uniform() < 0.5 ? -1 : 1);
    double b = rng.uniform(0.05, 2.0) * (rng.uniform() < 0.5 ? -1 : 1);
    Tensor<double> hi(1, 1, 1, 1, a), lo(1, 1, 1, 1, b);
    double beta =
        attention_coefficients(ad::constant(hi), ad::constant(lo)).value()(0, 0, 0, 0);
    if (a * b > 0) EXPECT_GT(beta, 0.5);
    else EXPECT_LT(beta, 0.5);
  }
}

TEST(Saam, AttentionLengthMismatchRejected) {
  Tensor<double> a(1, 4, 1, 1, 0.0), b(1, 5, 1, 1, 0.0);
  EXPECT_THROW(attention_coefficients(ad::constant(a), ad::constant(b)), UsageError);
}

TEST(Saam, FuseOutputShape) {
  Rng rng(7);
  AttentionTransform<float> phi_hi(64, 16, rng), phi_lo(64, 16, rng);
  Tensor<float> hi = testutil::random_tensor<float>(2, 64, 64, 64, rng);
  Tensor<float> lo = testutil::random_tensor<float>(2, 64, 32, 32, rng);
  auto fused = saam_fuse(ad::constant(hi), ad::constant(lo), phi_hi, phi_lo);
  EXPECT_EQ(fused.value().n(), 2);
  EXPECT_EQ(fused.value().c(), 128);
  EXPECT_EQ(fused.value().h(), 64);
  EXPECT_EQ(fused.value().w(), 64);
}

TEST(Saam, FirstHalfPassesThroughBitExact) {
  Rng rng(9);
  AttentionTransform<float> phi_hi(8, 4, rng), phi_lo(8, 4, rng);
  Tensor<float> hi = testutil::random_tensor<float>(1, 8, 8, 8, rng);
  Tensor<float> lo = testutil::random_tensor<float>(1, 8, 4, 4, rng);
  auto fused = saam_fuse(ad::constant(hi), ad::constant(lo), phi_hi, phi_lo);
  for (int c = 0; c < 8; ++c) {
    const float* src = hi.plane(0, c);
    const float* dst = fused.value().plane(0, c);
    for (int i = 0; i < 64; ++i) EXPECT_EQ(dst[i], src[i]);
  }
}

TEST(Saam, ZeroPhiGivesExactHalfGate) {
  Rng rng(11);
  AttentionTransform<double> phi_hi(8, 4, rng), phi_lo(8, 4, rng);
  zero_transform(phi_hi);
  zero_transform(phi_lo);
  Tensor<double> hi = testutil::random_tensor<double>(1, 8, 8, 8, rng);
  Tensor<double> lo = testutil::random_tensor<double>(1, 8, 4, 4, rng);
  auto fused = saam_fuse(ad::constant(hi), ad::constant(lo), phi_hi, phi_lo);
  auto up = ad::upsample2x(ad::constant(lo));
  for (int c = 0; c < 8; ++c) {
    const double* expect = up.value().plane(0, c);
    const double* got = fused.value().plane(0, 8 + c);
    for (int i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(got[i], 0.5 * expect[i]);
  }
}

TEST(Saam, ZeroedGateKillsChannel) {
  Rng rng(13);
  AttentionTransform<double> phi_hi(4, 2, rng), phi_lo(4, 2, rng);
  // Force v_hi * v_lo extremely negative on every channel: beta -> 0.
  zero_transform(phi_hi);
  zero_transform(phi_lo);
  phi_hi.fc2().bias().value().fill(40.0);
  phi_lo.fc2().bias().value().fill(-40.0);
  Tensor<double> hi = testutil::random_tensor<double>(1, 4, 4, 4, rng);
  Tensor<double> lo = testutil::random_tensor<double>(1, 4, 2, 2, rng);
  auto fused = saam_fuse(ad::constant(hi), ad::constant(lo), phi_hi, phi_lo);
  for (int c = 4; c < 8; ++c) {
    const double* got = fused.value().plane(0, c);
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(got[i], 0.0, 1e-10);
  }
}

TEST(Saam, BetaInOpenUnitIntervalOnRandomInputs) {
  Rng rng(15);
  AttentionTransform<double> phi_hi(16, 4, rng), phi_lo(16, 4, rng);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor<double> hi = testutil::random_tensor<double>(1, 16, 1, 1, rng, -5.0, 5.0);
    Tensor<double> lo = testutil::random_tensor<double>(1, 16, 1, 1, rng, -5.0, 5.0);
    auto beta = attention_coefficients(phi_hi(ad::constant(hi)), phi_lo(ad::constant(lo)));
    for (int c = 0; c < 16; ++c) {
      double b = beta.value()(0, c, 0, 0);
      EXPECT_GT(b, 0.0);
      EXPECT_LT(b, 1.0);
    }
  }
}

TEST(Saam, BetaSpatialPermutationInvariant) {
  Rng rng(17);
  AttentionTransform<double> phi_hi(8, 4, rng), phi_lo(8, 4, rng);
  Tensor<double> hi = testutil::random_tensor<double>(1, 8, 6, 6, rng);
  Tensor<double> lo = testutil::random_tensor<double>(1, 8, 6, 6, rng);

  auto beta_of = [&](const Tensor<double>& a, const Tensor<double>& b) {
    return attention_coefficients(phi_hi(channel_mean(ad::constant(a))),
                                  phi_lo(channel_mean(ad::constant(b))));
  };
  auto base = beta_of(hi, lo);

  // permute pixels independently within each channel of both inputs
  Rng prng(99);
  Tensor<double> hip = hi, lop = lo;
  for (int c = 0; c < 8; ++c) {
    std::vector<int> idx(36);
    std::iota(idx.begin(), idx.end(), 0);
    prng.shuffle(idx.begin(), idx.end());
    for (int i = 0; i < 36; ++i) {
      hip.plane(0, c)[i] = hi.plane(0, c)[idx[i]];
      lop.plane(0, c)[i] = lo.plane(0, c)[idx[i]];
    }
  }
  auto perm = beta_of(hip, lop);
  for (int c = 0; c < 8; ++c)
    EXPECT_NEAR(base.value()(0, c, 0, 0), perm.value()(0, c, 0, 0), 1e-6);
}

TEST(Saam, FuseGradcheckAgainstFiniteDifferences) {
  Rng rng(19);
  AttentionTransform<double> phi_hi(4, 2, rng), phi_lo(4, 2, rng);
  Tensor<double> hi = testutil::random_tensor<double>(1, 4, 8, 8, rng);
  Tensor<double> lo = testutil::random_tensor<double>(1, 4, 4, 4, rng);
  auto hi_v = ad::Var<double>(hi, true);
  auto lo_v = ad::Var<double>(lo, true);
  auto loss = [&] {
    auto fused = saam_fuse(hi_v, lo_v, phi_hi, phi_lo);
    return ad::mean_all(ad::mul(fused, fused));
  };
  std::vector<ad::Var<double>*> params{&hi_v,
                                       &lo_v,
                                       &phi_hi.fc1().weight(),
                                       &phi_hi.fc1().bias(),
                                       &phi_hi.fc2().weight(),
                                       &phi_hi.fc2().bias(),
                                       &phi_lo.fc1().weight(),
                                       &phi_lo.fc1().bias(),
                                       &phi_lo.fc2().weight(),
                                       &phi_lo.fc2().bias()};
  EXPECT_LT(testutil::max_rel_grad_error(loss, params), 1e-3);
}

TEST(Saam, FuseRejectsMismatchedChannels) {
  Rng rng(21);
  AttentionTransform<float> phi_hi(8, 4, rng), phi_lo(8, 4, rng);
  Tensor<float> hi(1, 8, 8, 8, 0.0f), lo(1, 4, 4, 4, 0.0f);
  EXPECT_THROW(saam_fuse(ad::constant(hi), ad::constant(lo), phi_hi, phi_lo), UsageError);
  Tensor<float> lo_wrong(1, 8, 8, 8, 0.0f);
  EXPECT_THROW(saam_fuse(ad::constant(hi), ad::constant(lo_wrong), phi_hi, phi_lo), UsageError);
}
