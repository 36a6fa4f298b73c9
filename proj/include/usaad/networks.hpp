#pragma once

#include <optional>
#include <string>
#include <vector>

#include "usaad/autodiff/conv.hpp"
#include "usaad/autodiff/graph.hpp"
#include "usaad/autodiff/ops.hpp"
#include "usaad/autodiff/resample.hpp"
#include "usaad/core/errors.hpp"
#include "usaad/nn/layers.hpp"
#include "usaad/saam.hpp"

namespace usaad {

// How the current scale's last-residual-block features are combined with the
// previous scale's before decoding.
enum class FusionMode { None, Add, Concat, ChannelAttention, SpatialAttention, Saam };

inline bool fusion_concats(FusionMode m) {
  return m == FusionMode::Concat || m == FusionMode::ChannelAttention ||
         m == FusionMode::SpatialAttention || m == FusionMode::Saam;
}

inline std::string fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::None: return "none";
    case FusionMode::Add: return "add";
    case FusionMode::Concat: return "concat";
    case FusionMode::ChannelAttention: return "channel_attention";
    case FusionMode::SpatialAttention: return "spatial_attention";
    case FusionMode::Saam: return "saam";
  }
  return "?";
}

inline FusionMode parse_fusion(const std::string& s) {
  for (FusionMode m : {FusionMode::None, FusionMode::Add, FusionMode::Concat,
                       FusionMode::ChannelAttention, FusionMode::SpatialAttention,
                       FusionMode::Saam}) {
    if (fusion_name(m) == s) return m;
  }
  throw UsageError("unknown fusion mode: " + s);
}

// Estimated sharp image and last-residual-block features at one scale.
template <typename T>
struct ScaleState {
  ad::Var<T> image;
  ad::Var<T> features;
};

template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int channels, Rng& rng)
      : c1_(channels, channels, 3, 1, 1, ad::PadMode::Reflect, rng),
        c2_(channels, channels, 3, 1, 1, ad::PadMode::Reflect, rng) {}

  ad::Var<T> operator()(const ad::Var<T>& x) const {
    auto h = ad::relu(ad::instance_norm(c1_(x)));
    return ad::add(x, ad::instance_norm(c2_(h)));
  }

  void params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    c1_.params(prefix + ".c1", out);
    c2_.params(prefix + ".c2", out);
  }

 private:
  nn::Conv2d<T> c1_, c2_;
};

// SE-style gate computed from the lower-scale features alone (the C.A
// ablation baseline).
template <typename T>
class ChannelGate {
 public:
  ChannelGate() = default;
  ChannelGate(int channels, int reduction, Rng& rng)
      : fc1_(channels, std::max(channels / reduction, 1), rng),
        fc2_(std::max(channels / reduction, 1), channels, rng) {}

  ad::Var<T> gate(const ad::Var<T>& lo) const {
    return ad::sigmoid(fc2_(ad::relu(fc1_(ad::mean_spatial(lo)))));
  }

  void params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    fc1_.params(prefix + ".fc1", out);
    fc2_.params(prefix + ".fc2", out);
  }

  nn::Linear<T>& fc1() { return fc1_; }
  nn::Linear<T>& fc2() { return fc2_; }

 private:
  nn::Linear<T> fc1_, fc2_;
};

// H x W gate from channel-pooled lower-scale features (the S.A baseline).
template <typename T>
class SpatialGate {
 public:
  SpatialGate() = default;
  explicit SpatialGate(Rng& rng) : conv_(2, 1, 7, 1, 3, ad::PadMode::Zero, rng) {}

  ad::Var<T> gate(const ad::Var<T>& lo) const {
    auto pooled = ad::concat_channels(ad::mean_channels(lo), ad::max_channels(lo));
    return ad::sigmoid(conv_(pooled));
  }

  void params(const std::string& prefix, std::vector<nn::ParamRef<T>>& out) {
    conv_.params(prefix + ".conv", out);
  }

 private:
  nn::Conv2d<T> conv_;
};

// Baseline fusions over feature maps already aligned to the same size.
template <typename T>
ad::Var<T> fuse_baseline(const ad::Var<T>& u_hi, const ad::Var<T>& u_lo, FusionMode mode,
                         const ChannelGate<T>* cgate = nullptr,
                         const SpatialGate<T>* sgate = nullptr) {
  check_same_shape(u_hi.value(), u_lo.value(), "fuse_baseline");
  switch (mode) {
    case FusionMode::Add:
      return ad::add(u_hi, u_lo);
    case FusionMode::Concat:
      return ad::concat_channels(u_hi, u_lo);
    case FusionMode::ChannelAttention:
      if (!cgate) throw UsageError("fuse_baseline: channel gate missing");
      return ad::concat_channels(u_hi, ad::mul_channel(u_lo, cgate->gate(u_lo)));
    case FusionMode::SpatialAttention:
      if (!sgate) throw UsageError("fuse_baseline: spatial gate missing");
      return ad::concat_channels(u_hi, ad::mul_spatial(u_lo, sgate->gate(u_lo)));
    default:
      throw UsageError("fuse_baseline: mode must be add/concat/channel/spatial attention");
  }
}

// Blur-to-sharp generator: stem + two stride-2 convolutions, nine residual
// blocks, fusion stage, mirrored decoder with a tanh head. One instance is
// shared by every scale. The encoder input is the channel concatenation of
// the blurred image at this scale and the upsampled previous-scale estimate
// (the image concatenated with itself at the coarsest scale).
template <typename T>
class GeneratorBS {
 public:
  GeneratorBS() = default;
  GeneratorBS(int image_channels, int base_width, FusionMode fusion, int reduction, Rng& rng)
      : image_channels_(image_channels), c_feat_(base_width * 4), fusion_(fusion) {
    const int b = base_width;
    stem_ = nn::Conv2d<T>(2 * image_channels, b, 7, 1, 3, ad::PadMode::Reflect, rng);
    enc1_ = nn::Conv2d<T>(b, 2 * b, 3, 2, 1, ad::PadMode::Zero, rng);
    enc2_ = nn::Conv2d<T>(2 * b, 4 * b, 3, 2, 1, ad::PadMode::Zero, rng);
    blocks_.reserve(9);
    for (int i = 0; i < 9; ++i) blocks_.emplace_back(c_feat_, rng);
    if (fusion == FusionMode::Saam) {
      phi_hi_.emplace(c_feat_, reduction, rng);
      phi_lo_.emplace(c_feat_, reduction, rng);
    } else if (fusion == FusionMode::ChannelAttention) {
      cgate_.emplace(c_feat_, reduction, rng);
    } else if (fusion == FusionMode::SpatialAttention) {
      sgate_.emplace(rng);
    }
    const int dec_in = fusion_concats(fusion) ? 2 * c_feat_ : c_feat_;
    dec1_ = nn::ConvTranspose2d<T>(dec_in, 2 * b, 3, 2, 1, 1, rng);
    dec2_ = nn::ConvTranspose2d<T>(2 * b, b, 3, 2, 1, 1, rng);
    head_ = nn::Conv2d<T>(b, image_channels, 7, 1, 3, ad::PadMode::Reflect, rng);
  }

  ScaleState<T> forward(const ad::Var<T>& image, const std::optional<ScaleState<T>>& prev) const {
    const auto& iv = image.value();
    if (iv.h() % 4 != 0 || iv.w() % 4 != 0)
      throw UsageError("generator: input size must be divisible by 4");
    if (iv.c() != image_channels_) throw UsageError("generator: channel mismatch");
    if (prev) {
      if (prev->features.value().h() * 2 != iv.h() / 4 ||
          prev->features.value().w() * 2 != iv.w() / 4)
        throw UsageError("generator: previous-scale features must be at half resolution");
    }

    ad::Var<T> x_in = prev ? ad::concat_channels(image, ad::upsample2x(prev->image))
                           : ad::concat_channels(image, image);
    auto h = ad::relu(ad::instance_norm(stem_(x_in)));
    h = ad::relu(ad::instance_norm(enc1_(h)));
    h = ad::relu(ad::instance_norm(enc2_(h)));
    for (const auto& block : blocks_) h = block(h);

    ad::Var<T> fused = fuse(h, prev);
    auto d = ad::relu(ad::instance_norm(dec1_(fused)));
    d = ad::relu(ad::instance_norm(dec2_(d)));
    auto out = ad::tanh_op(head_(d));
    return {out, h};
  }

  void params(std::vector<nn::ParamRef<T>>& out) {
    stem_.params("g_bs.stem", out);
    enc1_.params("g_bs.enc1", out);
    enc2_.params("g_bs.enc2", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].params("g_bs.res" + std::to_string(i + 1), out);
    if (phi_hi_) phi_hi_->params("g_bs.phi_hi", out);
    if (phi_lo_) phi_lo_->params("g_bs.phi_lo", out);
    if (cgate_) cgate_->params("g_bs.cgate", out);
    if (sgate_) sgate_->params("g_bs.sgate", out);
    dec1_.params("g_bs.dec1", out);
    dec2_.params("g_bs.dec2", out);
    head_.params("g_bs.head", out);
  }

  int feature_channels() const { return c_feat_; }
  int image_channels() const { return image_channels_; }
  FusionMode fusion() const { return fusion_; }
  AttentionTransform<T>& phi_hi() { return *phi_hi_; }
  AttentionTransform<T>& phi_lo() { return *phi_lo_; }
  ChannelGate<T>& channel_gate() { return *cgate_; }

 private:
  ad::Var<T> fuse(const ad::Var<T>& h, const std::optional<ScaleState<T>>& prev) const {
    const bool concats = fusion_concats(fusion_);
    if (!prev) {
      if (!concats) return h;  // None or Add at the coarsest scale
      // No previous scale: concatenate a zero feature map so the decoder
      // width is the same at every scale.
      return ad::concat_channels(h, ad::constant(Tensor<T>::zeros_like(h.value())));
    }
    if (fusion_ == FusionMode::None) return h;
    if (fusion_ == FusionMode::Saam) return saam_fuse(h, prev->features, *phi_hi_, *phi_lo_);
    ad::Var<T> lo = ad::upsample2x(prev->features);
    return fuse_baseline(h, lo, fusion_, cgate_ ? &*cgate_ : nullptr,
                         sgate_ ? &*sgate_ : nullptr);
  }

  int image_channels_ = 3;
  int c_feat_ = 256;
  FusionMode fusion_ = FusionMode::Saam;
  nn::Conv2d<T> stem_, enc1_, enc2_;
  std::vector<ResidualBlock<T>> blocks_;
  std::optional<AttentionTransform<T>> phi_hi_, phi_lo_;
  std::optional<ChannelGate<T>> cgate_;
  std::optional<SpatialGate<T>> sgate_;
  nn::ConvTranspose2d<T> dec1_, dec2_;
  nn::Conv2d<T> head_;
};

// Sharp-to-blur generator: four stride-1 3x3 convolutions at constant
// spatial size, bounded output. Deliberately lightweight.
template <typename T>
class GeneratorSB {
 public:
  GeneratorSB() = default;
  GeneratorSB(int image_channels, int width, Rng& rng) {
    c1_ = nn::Conv2d<T>(image_channels, width, 3, 1, 1, ad::PadMode::Reflect, rng);
    c2_ = nn::Conv2d<T>(width, width, 3, 1, 1, ad::PadMode::Reflect, rng);
    c3_ = nn::Conv2d<T>(width, width, 3, 1, 1, ad::PadMode::Reflect, rng);
    c4_ = nn::Conv2d<T>(width, image_channels, 3, 1, 1, ad::PadMode::Reflect, rng);
  }

  ad::Var<T> forward(const ad::Var<T>& x) const {
    auto h = ad::relu(ad::instance_norm(c1_(x)));
    h = ad::relu(ad::instance_norm(c2_(h)));
    h = ad::relu(ad::instance_norm(c3_(h)));
    return ad::tanh_op(c4_(h));
  }

  void params(std::vector<nn::ParamRef<T>>& out) {
    c1_.params("g_sb.c1", out);
    c2_.params("g_sb.c2", out);
    c3_.params("g_sb.c3", out);
    c4_.params("g_sb.c4", out);
  }

 private:
  nn::Conv2d<T> c1_, c2_, c3_, c4_;
};

// PatchGAN discriminator: n_stride2 strided 4x4 convolutions, a stride-1
// 4x4 convolution, and a stride-1 4x4 head emitting one logit per patch.
// n_stride2 = 3 is the classic 70x70 configuration (30x30 map on 256 input).
template <typename T>
class PatchDiscriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(const std::string& name, int image_channels, int base, int n_stride2,
                     Rng& rng)
      : name_(name), n_stride2_(n_stride2) {
    if (n_stride2 < 1) throw UsageError("discriminator: n_stride2 must be >= 1");
    int in = image_channels;
    for (int i = 0; i < n_stride2; ++i) {
      int out = std::min(base << i, 512);
      convs_.emplace_back(in, out, 4, 2, 1, ad::PadMode::Zero, rng);
      in = out;
    }
    int out = std::min(base << n_stride2, 512);
    pre_head_ = nn::Conv2d<T>(in, out, 4, 1, 1, ad::PadMode::Zero, rng);
    head_ = nn::Conv2d<T>(out, 1, 4, 1, 1, ad::PadMode::Zero, rng);
  }

  // Smallest input whose patch map is non-empty.
  int min_input() const { return 3 << n_stride2_; }

  // Deepest configuration whose patch map is non-empty at `size`, capped at
  // the classic depth of 3.
  static int max_stride2_layers(int size) {
    for (int n = 3; n >= 1; --n) {
      if (size >= (3 << n)) return n;
    }
    throw UsageError("discriminator: input size " + std::to_string(size) +
                     " is below the minimum receptive field (6)");
  }

  ad::Var<T> forward(const ad::Var<T>& x) const {
    if (x.value().h() < min_input() || x.value().w() < min_input())
      throw UsageError(name_ + ": input " + std::to_string(x.value().h()) + "x" +
                       std::to_string(x.value().w()) + " smaller than receptive field (min " +
                       std::to_string(min_input()) + ")");
    auto h = ad::leaky_relu(convs_[0](x), static_cast<T>(0.2));
    for (std::size_t i = 1; i < convs_.size(); ++i)
      h = ad::leaky_relu(ad::instance_norm(convs_[i](h)), static_cast<T>(0.2));
    h = ad::leaky_relu(ad::instance_norm(pre_head_(h)), static_cast<T>(0.2));
    return head_(h);
  }

  void params(std::vector<nn::ParamRef<T>>& out) {
    for (std::size_t i = 0; i < convs_.size(); ++i)
      convs_[i].params(name_ + ".l" + std::to_string(i), out);
    pre_head_.params(name_ + ".pre", out);
    head_.params(name_ + ".head", out);
  }

 private:
  std::string name_;
  int n_stride2_ = 3;
  std::vector<nn::Conv2d<T>> convs_;
  nn::Conv2d<T> pre_head_, head_;
};

}  // namespace usaad
