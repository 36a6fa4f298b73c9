#pragma once

#include <algorithm>
#include <cstdint>

#include "usaad/networks.hpp"

// Independent parameter accounting from layer dimensions alone; must track
// the construction rules in networks.hpp without sharing code with them.
namespace testutil {

inline std::int64_t conv_params(int in, int out, int k) {
  return static_cast<std::int64_t>(out) * in * k * k + out;
}
inline std::int64_t convt_params(int in, int out, int k) {
  return static_cast<std::int64_t>(in) * out * k * k + out;
}
inline std::int64_t linear_params(int in, int out) {
  return static_cast<std::int64_t>(out) * in + out;
}

inline std::int64_t expected_generator_bs_params(int image_channels, int base, usaad::FusionMode m,
                                                 int reduction) {
  const int c = 4 * base;
  std::int64_t total = 0;
  total += conv_params(2 * image_channels, base, 7);
  total += conv_params(base, 2 * base, 3);
  total += conv_params(2 * base, c, 3);
  total += 9 * 2 * conv_params(c, c, 3);
  const int hidden = std::max(c / reduction, 1);
  if (m == usaad::FusionMode::Saam)
    total += 2 * (linear_params(c, hidden) + linear_params(hidden, c));
  if (m == usaad::FusionMode::ChannelAttention)
    total += linear_params(c, hidden) + linear_params(hidden, c);
  if (m == usaad::FusionMode::SpatialAttention) total += conv_params(2, 1, 7);
  const int dec_in = usaad::fusion_concats(m) ? 2 * c : c;
  total += convt_params(dec_in, 2 * base, 3);
  total += convt_params(2 * base, base, 3);
  total += conv_params(base, image_channels, 7);
  return total;
}

inline std::int64_t expected_generator_sb_params(int image_channels, int width) {
  return conv_params(image_channels, width, 3) + 2 * conv_params(width, width, 3) +
         conv_params(width, image_channels, 3);
}

inline std::int64_t expected_discriminator_params(int image_channels, int base, int n_stride2) {
  std::int64_t total = 0;
  int in = image_channels;
  for (int i = 0; i < n_stride2; ++i) {
    int out = std::min(base << i, 512);
    total += conv_params(in, out, 4);
    in = out;
  }
  int out = std::min(base << n_stride2, 512);
  total += conv_params(in, out, 4);
  total += conv_params(out, 1, 4);
  return total;
}

}  // namespace testutil
