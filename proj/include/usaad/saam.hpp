#pragma once

#include <string>
#include <vector>

#include "usaad/autodiff/graph.hpp"
#include "usaad/autodiff/ops.hpp"
#include "usaad/autodiff/resample.hpp"
#include "usaad/core/errors.hpp"
#include "usaad/nn/layers.hpp"

namespace usaad {

// Scale-adaptive attention: gate lower-scale feature channels by the
// sigmoid of the product of learned channel descriptors from both scales,
// then concatenate with the current-scale features.

// Spatial mean of each channel: N x C x H x W -> N x C x 1 x 1, computed
// independently per batch element.
template <typename T>
ad::Var<T> channel_mean(const ad::Var<T>& features) {
  return ad::mean_spatial(features);
}

// beta = sigmoid(v_hi * v_lo), element-wise product. Aligned channel
// descriptors (same sign) score above 0.5, misaligned below.
template <typename T>
ad::Var<T> attention_coefficients(const ad::Var<T>& v_hi, const ad::Var<T>& v_lo) {
  if (v_hi.value().c() != v_lo.value().c() || v_hi.value().n() != v_lo.value().n())
    throw UsageError("attention_coefficients: length mismatch");
  // clamp keeps beta strictly inside (0, 1) even where sigmoid saturates
  return ad::clamp_open_unit(ad::sigmoid(ad::mul(v_hi, v_lo)));
}

// Phi: two-layer bottleneck C -> C/r -> C with a rectifier in between.
template <typename T>
class AttentionTransform {
 public:
  AttentionTransform() = default;
  AttentionTransform(int channels, int reduction, Rng& rng)
      : fc1_(channels, std::max(channels / reduction, 1), rng),
        fc2_(std::max(channels / reduction, 1), channels, rng) {}

  ad::Var<T> operator()(const ad::Var<T>& u) const { return fc2_(ad::relu(fc1_(u))); }

  void params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    fc1_.params(prefix + ".fc1", out);
    fc2_.params(prefix + ".fc2", out);
  }

  nn::Linear<T>& fc1() { return fc1_; }
  nn::Linear<T>& fc2() { return fc2_; }

 private:
  nn::Linear<T> fc1_, fc2_;
};

// u_lo_half is the previous scale's feature map at half resolution; it is
// upsampled here before any statistics are taken. Output is the channel
// concatenation [u_hi, beta (.) upsample(u_lo_half)] with 2C channels; the
// first C channels pass through untouched.
template <typename T>
ad::Var<T> saam_fuse(const ad::Var<T>& u_hi, const ad::Var<T>& u_lo_half,
                     const AttentionTransform<T>& phi_hi, const AttentionTransform<T>& phi_lo) {
  const auto& hv = u_hi.value();
  const auto& lv = u_lo_half.value();
  if (hv.c() != lv.c() || hv.n() != lv.n())
    throw UsageError("saam_fuse: channel/batch mismatch");
  if (lv.h() * 2 != hv.h() || lv.w() * 2 != hv.w())
    throw UsageError("saam_fuse: lower-scale features must be at half resolution");

  ad::Var<T> u_lo = ad::upsample2x(u_lo_half);
  ad::Var<T> v_hi = phi_hi(channel_mean(u_hi));
  ad::Var<T> v_lo = phi_lo(channel_mean(u_lo));
  ad::Var<T> beta = attention_coefficients(v_hi, v_lo);
  return ad::concat_channels(u_hi, ad::mul_channel(u_lo, beta));
}

}  // namespace usaad
