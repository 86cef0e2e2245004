#pragma once

// Least-squares adversarial losses, L1 cycle/identity losses and the
// weighted full objective. Every reduction is a mean over elements.
//
// Each loss has a value form and a `_grad` form; the gradient form writes
// dLoss/dInput into caller-provided spans and returns the same value.

#include <cstdint>
#include <span>
#include <utility>

namespace maskvc {

struct LossWeights {
  double lambda_cyc = 10.0;
  double lambda_id = 5.0;
  // Identity terms count only while iteration < id_active_until.
  std::int64_t id_active_until = 10'000;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Generator-side terms of one training step plus both totals.
struct LossBreakdown {
  double adv_xy = 0;
  double adv_yx = 0;
  double cyc_xyx = 0;
  double cyc_yxy = 0;
  double id_xy = 0;
  double id_yx = 0;
  double adv2_xyx = 0;
  double adv2_yxy = 0;
  double total_g = 0;
  double total_d = 0;

  bool operator==(const LossBreakdown&) const = default;
};

// Least-squares losses of the four discriminators (D_X, D_Y, D'_X, D'_Y).
struct DiscriminatorLosses {
  double d_x = 0;
  double d_y = 0;
  double d2_x = 0;
  double d2_y = 0;
};

struct ObjectiveTotals {
  double g_total = 0;
  double d_total = 0;
};

// mean((real - 1)^2) + mean(fake^2)
template <typename T>
double lsgan_d_loss(std::span<const T> real, std::span<const T> fake);
template <typename T>
double lsgan_d_loss_grad(std::span<const T> real, std::span<const T> fake,
                         std::span<T> d_real, std::span<T> d_fake);

// mean((fake - 1)^2)
template <typename T>
double lsgan_g_loss(std::span<const T> fake);
template <typename T>
double lsgan_g_loss_grad(std::span<const T> fake, std::span<T> d_fake);

// mean(|reconstruction - original|); gradient is w.r.t. the reconstruction.
template <typename T>
double masked_cycle_loss(std::span<const T> original, std::span<const T> reconstruction);
template <typename T>
double identity_loss(std::span<const T> mapped, std::span<const T> target);
template <typename T>
double l1_loss_grad(std::span<const T> prediction, std::span<const T> target,
                    std::span<T> d_prediction);

// Discriminator- and generator-side least-squares losses of D' on the
// cyclic reconstruction.
template <typename T>
std::pair<double, double> second_adv_losses(std::span<const T> real, std::span<const T> recon);

ObjectiveTotals full_objective(const LossBreakdown& terms, const DiscriminatorLosses& d,
                               const LossWeights& w, std::int64_t iteration);

bool identity_active(const LossWeights& w, std::int64_t iteration);

// Sigmoid/log form of the adversarial objective,
// mean(log sigmoid(real)) + mean(log(1 - sigmoid(fake))). Reference only:
// training always uses the least-squares form.
template <typename T>
double log_adversarial_objective(std::span<const T> real_logits, std::span<const T> fake_logits);

}  // namespace maskvc
