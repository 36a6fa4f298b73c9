#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "usaad/autodiff/conv.hpp"
#include "usaad/autodiff/graph.hpp"
#include "usaad/autodiff/ops.hpp"
#include "usaad/core/random.hpp"
#include "usaad/core/tensor.hpp"

namespace usaad::nn {

template <typename T>
struct ParamRef {
  std::string name;
  ad::Var<T>* var;
};

template <typename T>
Tensor<T> he_normal(int n, int c, int h, int w, int fan_in, Rng& rng) {
  Tensor<T> t(n, c, h, w);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.normal() * stddev);
  return t;
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int k, int stride, int pad, ad::PadMode mode, Rng& rng)
      : stride_(stride), pad_(pad), mode_(mode) {
    weight_ = ad::Var<T>(he_normal<T>(out, in, k, k, in * k * k, rng), true);
    bias_ = ad::Var<T>(Tensor<T>(1, out, 1, 1), true);
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const {
    return ad::conv2d(x, weight_, bias_, stride_, pad_, mode_);
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &weight_});
    out.push_back({prefix + ".b", &bias_});
  }

  ad::Var<T>& weight() { return weight_; }
  ad::Var<T>& bias() { return bias_; }

 private:
  ad::Var<T> weight_, bias_;
  int stride_ = 1, pad_ = 0;
  ad::PadMode mode_ = ad::PadMode::Zero;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int in, int out, int k, int stride, int pad, int out_pad, Rng& rng)
      : stride_(stride), pad_(pad), out_pad_(out_pad) {
    weight_ = ad::Var<T>(he_normal<T>(in, out, k, k, in * k * k, rng), true);
    bias_ = ad::Var<T>(Tensor<T>(1, out, 1, 1), true);
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const {
    return ad::conv_transpose2d(x, weight_, bias_, stride_, pad_, out_pad_);
  }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &weight_});
    out.push_back({prefix + ".b", &bias_});
  }

  ad::Var<T>& weight() { return weight_; }
  ad::Var<T>& bias() { return bias_; }

 private:
  ad::Var<T> weight_, bias_;
  int stride_ = 1, pad_ = 0, out_pad_ = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    weight_ = ad::Var<T>(he_normal<T>(out, in, 1, 1, in, rng), true);
    bias_ = ad::Var<T>(Tensor<T>(1, out, 1, 1), true);
  }

  ad::Var<T> operator()(const ad::Var<T>& x) const { return ad::linear(x, weight_, bias_); }

  void params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &weight_});
    out.push_back({prefix + ".b", &bias_});
  }

  ad::Var<T>& weight() { return weight_; }
  ad::Var<T>& bias() { return bias_; }

 private:
  ad::Var<T> weight_, bias_;
};

template <typename T>
std::int64_t parameter_count(const std::vector<ParamRef<T>>& refs) {
  std::int64_t total = 0;
  for (const auto& r : refs) total += static_cast<std::int64_t>(r.var->value().numel());
  return total;
}

}  // namespace usaad::nn
