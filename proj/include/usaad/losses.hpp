#pragma once

#include <string>
#include <vector>

#include "usaad/autodiff/graph.hpp"
#include "usaad/autodiff/ops.hpp"
#include "usaad/core/errors.hpp"

namespace usaad {

enum class GanSide { Generator, Discriminator };

// Adversarial objective on raw patch logits, expectation realized as the
// mean over batch and patches.
//   Discriminator side: E[log sigma(real)] + E[log (1 - sigma(fake))],
//   the quantity the discriminator maximizes (the trainer minimizes its
//   negation).
//   Generator side: E[log sigma(fake)], the non-saturating surrogate the
//   generator maximizes.
template <typename T>
ad::Var<T> gan_loss(const ad::Var<T>& real_logits, const ad::Var<T>& fake_logits, GanSide side) {
  if (side == GanSide::Generator) return ad::mean_all(ad::log_sigmoid(fake_logits));
  // log(1 - sigma(x)) == log sigma(-x)
  auto real_term = ad::mean_all(ad::log_sigmoid(real_logits));
  auto fake_term = ad::mean_all(ad::log_sigmoid(ad::scale(fake_logits, T{-1})));
  return ad::add_scalar_var(real_term, fake_term);
}

// Mean absolute error normalized by element count.
template <typename T>
ad::Var<T> cycle_loss(const ad::Var<T>& reconstructed, const ad::Var<T>& original) {
  check_same_shape(reconstructed.value(), original.value(), "cycle_loss");
  return ad::mean_all(ad::abs_op(ad::sub(reconstructed, original)));
}

// The four per-scale loss terms, reported in the maximization form of the
// adversarial objective.
struct ScaleLosses {
  double gan_bs = 0;  // L_GAN(G_B->S, D_S)
  double gan_sb = 0;  // L_GAN(G_S->B, D_B)
  double cyc_b = 0;
  double cyc_s = 0;

  double weighted_total(double lambda_adv, double lambda_cyc) const {
    return lambda_adv * (gan_bs + gan_sb) + lambda_cyc * (cyc_b + cyc_s);
  }
};

struct LossBundle {
  std::vector<ScaleLosses> scales;  // coarsest first
  double lambda_adv = 1.0;
  double lambda_cyc = 10.0;

  double total() const;
  bool finite() const;
  // Name of the first non-finite term, e.g. "cyc_b at scale 2"; empty if all
  // finite.
  std::string first_non_finite() const;
};

// Weighted sum over scales of all four terms.
inline double total_loss(const std::vector<ScaleLosses>& per_scale, double lambda_adv,
                         double lambda_cyc) {
  if (per_scale.empty()) throw UsageError("total_loss: no scales");
  double total = 0;
  for (const auto& s : per_scale) total += s.weighted_total(lambda_adv, lambda_cyc);
  return total;
}

inline double LossBundle::total() const { return total_loss(scales, lambda_adv, lambda_cyc); }

inline std::string LossBundle::first_non_finite() const {
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const auto& s = scales[i];
    const std::string at = " at scale " + std::to_string(i + 1);
    if (!std::isfinite(s.gan_bs)) return "gan_bs" + at;
    if (!std::isfinite(s.gan_sb)) return "gan_sb" + at;
    if (!std::isfinite(s.cyc_b)) return "cyc_b" + at;
    if (!std::isfinite(s.cyc_s)) return "cyc_s" + at;
  }
  return {};
}

inline bool LossBundle::finite() const { return first_non_finite().empty(); }

}  // namespace usaad
