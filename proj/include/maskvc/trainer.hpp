#pragma once

// Dual-direction CycleGAN training with filling-in-frames masking.
//
// One step, forward-inverse direction (the inverse-forward one mirrors it):
//   m ~ policy, x_hat = x * m
//   y' = G_xy(concat(x_hat, m))          adversarial loss against D_Y
//   x'' = G_yx(concat(y', ones))         L1 cycle loss vs x, second
//                                        adversarial loss against D'_X
//   G_xy(concat(y, ones)) vs y           identity loss (early iterations)
// The four discriminators are updated first on the detached fakes, then both
// converters on the weighted generator objective.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "maskvc/mask.hpp"
#include "maskvc/mel.hpp"
#include "maskvc/models.hpp"
#include "maskvc/objectives.hpp"
#include "maskvc/rng.hpp"

namespace maskvc {

struct TrainConfig {
  std::int64_t iterations = 500'000;
  double lr_g = 2e-4;
  double lr_d = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  int crop_frames = 64;
  LossWeights weights;
  MaskPolicy mask_policy{MaskFamily::kFif, SizeMode::kUniform, 50.0};
  // false: single-input converters fed unmasked spectrograms (baseline).
  bool mask_input = true;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 10'000;
  Preset preset = Preset::kFull;
  int mel_bins = 80;
  // Test hook: keep the discriminators frozen at their current weights.
  bool update_discriminators = true;

  void validate() const;
  // Sets one key from its text form; throws Error(kConfig) for unknown keys
  // or malformed values. Keys are the ones written by to_ini().
  void set(std::string_view key, std::string_view value);
  // Flat "key = value" INI text with every key, readable by parse_ini().
  std::string to_ini() const;
  static TrainConfig parse_ini(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
  // Settings that determine the training trajectory, one "key = value" per
  // line. Run length and checkpoint cadence are excluded so a run can be
  // extended from its checkpoint.
  std::string canonical() const;
  std::uint64_t hash() const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
struct Networks {
  Converter<T> g_xy;
  Converter<T> g_yx;
  Discriminator<T> d_x;
  Discriminator<T> d_y;
  Discriminator<T> d2_x;
  Discriminator<T> d2_y;
};

template <typename T>
Networks<T> make_networks(const TrainConfig& cfg);

template <typename T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t steps = 0;

  AdamMoments() = default;
  explicit AdamMoments(std::size_t n) : m(n, T(0)), v(n, T(0)) {}
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of `params` in place.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments<T>& moments,
               const AdamConfig& cfg);

struct TrainState {
  Networks<float> nets;
  AdamMoments<float> opt_g_xy;
  AdamMoments<float> opt_g_yx;
  AdamMoments<float> opt_d_x;
  AdamMoments<float> opt_d_y;
  AdamMoments<float> opt_d2_x;
  AdamMoments<float> opt_d2_y;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;  // per-iteration RNG streams derive from this
};

TrainState make_train_state(const TrainConfig& cfg);

// Normalized crops and masks for one step. Spans are bin-major F x T.
template <typename T>
struct StepBatch {
  std::span<const T> x;
  std::span<const T> y;
  int bins = 0;
  int frames = 0;
  Mask m_x;
  Mask m_y;
};

// Converter outputs of one step with the tapes needed for backward.
template <typename T>
struct GeneratorPass {
  nn::Tape<T> xy_first, yx_second, yx_first, xy_second, xy_id, yx_id;
  nn::Tensor<T> y_fake, x_cycle, x_fake, y_cycle, y_id, x_id;
  bool identity = false;
};

template <typename T>
GeneratorPass<T> forward_generators(const Networks<T>& nets, const StepBatch<T>& batch,
                                    bool identity);

// Least-squares losses of all four discriminators on real data and the
// pass's detached fakes; accumulates parameter gradients when requested.
template <typename T>
DiscriminatorLosses discriminator_losses(const Networks<T>& nets, const StepBatch<T>& batch,
                                         const GeneratorPass<T>& pass,
                                         std::vector<T>* grad_d_x, std::vector<T>* grad_d_y,
                                         std::vector<T>* grad_d2_x, std::vector<T>* grad_d2_y);

// Generator-side terms and total_g at `iteration`; accumulates gradients of
// total_g w.r.t. both converters when grad pointers are non-null.
template <typename T>
LossBreakdown generator_losses(const Networks<T>& nets, const StepBatch<T>& batch,
                               const GeneratorPass<T>& pass, const LossWeights& weights,
                               std::int64_t iteration, std::vector<T>* grad_g_xy,
                               std::vector<T>* grad_g_yx);

// Contiguous n-frame slice starting uniformly in [0, T - n].
MelSpectrogram crop_frames(const MelSpectrogram& mel, int n, Rng& rng);

// One optimization step on normalized crops; masks are drawn from `rng` and
// reported through `masks_out` when given. Increments state.iteration.
// Throws Error(kNumeric) naming the offending term when a loss is non-finite.
LossBreakdown train_step(TrainState& state, const MelSpectrogram& x_crop,
                         const MelSpectrogram& y_crop, const TrainConfig& cfg, Rng& rng,
                         std::pair<Mask, Mask>* masks_out = nullptr);

// Sampling for iteration i of a run: utterance choice, crops and masks all
// come from derive_seed(seed, kStepStream, i).
inline constexpr std::uint64_t kStepStream = 0x5354'4550;  // "STEP"
inline constexpr std::uint64_t kInitStream = 0x494e'4954;  // "INIT"
inline constexpr int kConfigFormatVersion = 1;

struct TrainingRecord {
  std::int64_t iteration = 0;
  double wall_time_s = 0;
  LossBreakdown losses;
  int mask_start = 0;
  int mask_extent = 0;
};

// Serializes one record as a single JSON line (no trailing newline).
std::string training_record_json(const TrainingRecord& r);
TrainingRecord parse_training_record(const std::string& line);

struct TrainingRun {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  bool force = false;  // accept a resume checkpoint with a different config hash
  bool quiet = false;
  NormStats stats_x;
  NormStats stats_y;
  StftConfig stft;
  // Called after every step (for progress reporting / tests).
  std::function<void(const TrainingRecord&)> on_step;
};

// Trains on two normalized, non-parallel corpora. Utterances shorter than
// crop_frames are skipped with a warning. Writes checkpoint_<iter>.ckpt every
// checkpoint_every iterations, final.ckpt at the end, and appends one JSON
// line per step to train_log.jsonl. Returns the final checkpoint path.
std::filesystem::path run_training(const TrainConfig& cfg,
                                   const std::vector<MelSpectrogram>& corpus_x,
                                   const std::vector<MelSpectrogram>& corpus_y,
                                   const TrainingRun& run);

}  // namespace maskvc
