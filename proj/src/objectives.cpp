#include "maskvc/objectives.hpp"

#include <cmath>
#include <string>

#include "maskvc/error.hpp"

namespace maskvc {

namespace {

template <typename T>
void require_finite(std::span<const T> v, const char* what) {
  for (T x : v)
    if (!std::isfinite(x)) throw Error(ErrorKind::kNumeric, std::string("non-finite ") + what);
}

template <typename T>
void require_same_size(std::span<const T> a, std::span<const T> b, const char* what) {
  if (a.size() != b.size())
    throw Error(ErrorKind::kData, std::string(what) + ": size mismatch (" +
                                      std::to_string(a.size()) + " vs " +
                                      std::to_string(b.size()) + ")");
  if (a.empty()) throw Error(ErrorKind::kData, std::string(what) + ": empty input");
}

template <typename T>
double mean_sq_offset(std::span<const T> v, double target) {
  double acc = 0;
  for (T x : v) {
    const double d = static_cast<double>(x) - target;
    acc += d * d;
  }
  return acc / static_cast<double>(v.size());
}

template <typename T>
double mean_abs_diff(std::span<const T> a, std::span<const T> b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return acc / static_cast<double>(a.size());
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_cyc >= 0) || !(lambda_id >= 0) || id_active_until < 0)
    throw Error(ErrorKind::kConfig, "loss weights must be non-negative");
}

template <typename T>
double lsgan_d_loss(std::span<const T> real, std::span<const T> fake) {
  require_finite(real, "discriminator scores (real)");
  require_finite(fake, "discriminator scores (fake)");
  if (real.empty() || fake.empty()) throw Error(ErrorKind::kData, "empty score grid");
  return mean_sq_offset(real, 1.0) + mean_sq_offset(fake, 0.0);
}

template <typename T>
double lsgan_d_loss_grad(std::span<const T> real, std::span<const T> fake, std::span<T> d_real,
                         std::span<T> d_fake) {
  const double loss = lsgan_d_loss(real, fake);
  const double sr = 2.0 / static_cast<double>(real.size());
  const double sf = 2.0 / static_cast<double>(fake.size());
  for (std::size_t i = 0; i < real.size(); ++i) d_real[i] = static_cast<T>(sr * (real[i] - 1.0));
  for (std::size_t i = 0; i < fake.size(); ++i) d_fake[i] = static_cast<T>(sf * fake[i]);
  return loss;
}

template <typename T>
double lsgan_g_loss(std::span<const T> fake) {
  require_finite(fake, "discriminator scores (fake)");
  if (fake.empty()) throw Error(ErrorKind::kData, "empty score grid");
  return mean_sq_offset(fake, 1.0);
}

template <typename T>
double lsgan_g_loss_grad(std::span<const T> fake, std::span<T> d_fake) {
  const double loss = lsgan_g_loss(fake);
  const double s = 2.0 / static_cast<double>(fake.size());
  for (std::size_t i = 0; i < fake.size(); ++i) d_fake[i] = static_cast<T>(s * (fake[i] - 1.0));
  return loss;
}

template <typename T>
double masked_cycle_loss(std::span<const T> original, std::span<const T> reconstruction) {
  require_same_size(original, reconstruction, "cycle loss");
  return mean_abs_diff(reconstruction, original);
}

template <typename T>
double identity_loss(std::span<const T> mapped, std::span<const T> target) {
  require_same_size(mapped, target, "identity loss");
  return mean_abs_diff(mapped, target);
}

template <typename T>
double l1_loss_grad(std::span<const T> prediction, std::span<const T> target,
                    std::span<T> d_prediction) {
  require_same_size(prediction, target, "l1 loss");
  const double loss = mean_abs_diff(prediction, target);
  const T s = static_cast<T>(1.0 / static_cast<double>(prediction.size()));
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const T d = prediction[i] - target[i];
    d_prediction[i] = d > T(0) ? s : (d < T(0) ? -s : T(0));
  }
  return loss;
}

template <typename T>
std::pair<double, double> second_adv_losses(std::span<const T> real, std::span<const T> recon) {
  return {lsgan_d_loss(real, recon), lsgan_g_loss(recon)};
}

bool identity_active(const LossWeights& w, std::int64_t iteration) {
  return iteration < w.id_active_until;
}

ObjectiveTotals full_objective(const LossBreakdown& t, const DiscriminatorLosses& d,
                               const LossWeights& w, std::int64_t iteration) {
  const double terms[] = {t.adv_xy, t.adv_yx,   t.cyc_xyx,  t.cyc_yxy, t.id_xy, t.id_yx,
                          t.adv2_xyx, t.adv2_yxy, d.d_x, d.d_y, d.d2_x, d.d2_y};
  for (double v : terms)
    if (!std::isfinite(v)) throw Error(ErrorKind::kNumeric, "non-finite loss term");
  ObjectiveTotals out;
  out.g_total = t.adv_xy + t.adv_yx + w.lambda_cyc * (t.cyc_xyx + t.cyc_yxy) + t.adv2_xyx +
                t.adv2_yxy;
  if (identity_active(w, iteration)) out.g_total += w.lambda_id * (t.id_xy + t.id_yx);
  out.d_total = d.d_x + d.d_y + d.d2_x + d.d2_y;
  return out;
}

template <typename T>
double log_adversarial_objective(std::span<const T> real_logits,
                                 std::span<const T> fake_logits) {
  require_finite(real_logits, "logits (real)");
  require_finite(fake_logits, "logits (fake)");
  // log sigmoid(z) = -log1p(exp(-z)); log(1 - sigmoid(z)) = -log1p(exp(z))
  double real = 0;
  for (T z : real_logits) real += -std::log1p(std::exp(-static_cast<double>(z)));
  double fake = 0;
  for (T z : fake_logits) fake += -std::log1p(std::exp(static_cast<double>(z)));
  return real / static_cast<double>(real_logits.size()) +
         fake / static_cast<double>(fake_logits.size());
}

#define MASKVC_INSTANTIATE(T)                                                                  \
  template double lsgan_d_loss<T>(std::span<const T>, std::span<const T>);                     \
  template double lsgan_d_loss_grad<T>(std::span<const T>, std::span<const T>, std::span<T>,   \
                                       std::span<T>);                                          \
  template double lsgan_g_loss<T>(std::span<const T>);                                         \
  template double lsgan_g_loss_grad<T>(std::span<const T>, std::span<T>);                      \
  template double masked_cycle_loss<T>(std::span<const T>, std::span<const T>);                \
  template double identity_loss<T>(std::span<const T>, std::span<const T>);                    \
  template double l1_loss_grad<T>(std::span<const T>, std::span<const T>, std::span<T>);       \
  template std::pair<double, double> second_adv_losses<T>(std::span<const T>,                  \
                                                          std::span<const T>);                 \
  template double log_adversarial_objective<T>(std::span<const T>, std::span<const T>);

MASKVC_INSTANTIATE(float)
MASKVC_INSTANTIATE(double)

#undef MASKVC_INSTANTIATE

}  // namespace maskvc
