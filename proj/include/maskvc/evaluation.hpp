#pragma once

// Objective metrics and the ablation harness.
//
// Mel-cepstra are the orthonormal DCT-II of each log-mel frame, so absolute
// MCD values are not comparable with WORLD-based figures; only orderings
// between variants evaluated here are meaningful.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskvc/features.hpp"
#include "maskvc/mask.hpp"
#include "maskvc/trainer.hpp"

namespace maskvc {

inline constexpr int kDefaultCepstralOrder = 35;

// Frame-major: values[frame * order + coefficient].
struct MelCepstrum {
  int order = 0;
  int frames = 0;
  std::vector<double> values;

  double at(int frame, int c) const {
    return values[static_cast<std::size_t>(frame) * order + c];
  }
};

// Coefficients c0..c_{order-1} of every frame; order <= mel bins.
MelCepstrum mel_cepstrum(const MelSpectrogram& mel, int order = kDefaultCepstralOrder);
// Inverse transform; exact only when order equals the bin count.
MelSpectrogram inverse_mel_cepstrum(const MelCepstrum& mc, int bins);

// Euclidean distance between frames over c1..c_{order-1}.
double cepstral_distance(const MelCepstrum& a, int ta, const MelCepstrum& b, int tb);

struct Alignment {
  std::vector<std::pair<int, int>> path;  // (frame of a, frame of b), monotone
  double cost = 0;                        // summed frame distances along the path
};

// Steps (1,0), (0,1), (1,1) with unit weight and no band. Ties prefer the
// diagonal step.
Alignment dtw_align(const MelCepstrum& a, const MelCepstrum& b);

inline constexpr double kMcdScale = 6.141851463713754;  // 10 * sqrt(2) / ln 10

// Mean over the path of kMcdScale * distance, in dB.
double mcd(const MelCepstrum& converted, const MelCepstrum& target, const Alignment& path);
// Aligns with dtw_align first.
double mcd(const MelCepstrum& converted, const MelCepstrum& target);

// Mean L1 error over masked cells of the cycle reconstruction
// G_back(G_fwd(x * m, m), 1) against x. Each held-out utterance is cut into
// consecutive crop_frames crops from frame 0 (a short tail is dropped); crop
// k gets its own mask from `policy` under `seed`.
double masked_reconstruction_l1(const ConverterParams& forward, const ConverterParams& backward,
                                const std::vector<MelSpectrogram>& held_out, int crop_frames,
                                const MaskPolicy& policy, std::uint64_t seed);

// ---- Ablation harness -------------------------------------------------------

struct AblationVariant {
  std::string label;
  // TrainConfig keys applied on top of the matrix's base settings.
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct AblationMatrix {
  std::string name;
  std::vector<std::pair<std::string, std::string>> base;
  std::vector<AblationVariant> variants;
  std::vector<std::uint64_t> seeds{0};

  // [matrix] name, seeds = comma list; [base] TrainConfig keys;
  // one [variant NAME] section per variant.
  static AblationMatrix parse_ini(std::string_view text);
  static AblationMatrix load(const std::filesystem::path& path);
  TrainConfig config_for(const AblationVariant& v, std::uint64_t seed) const;
};

// Normalized training corpora plus parallel held-out pairs (unnormalized).
struct AblationData {
  std::vector<MelSpectrogram> train_x;
  std::vector<MelSpectrogram> train_y;
  std::vector<MelSpectrogram> eval_x;
  std::vector<MelSpectrogram> eval_y;  // eval_y[i] is the parallel rendering of eval_x[i]
  NormStats stats_x;
  NormStats stats_y;
  StftConfig stft;
  std::string pair_xy = "X-Y";
  std::string pair_yx = "Y-X";  // empty: report the X to Y direction only
};

struct AblationRow {
  std::string variant;
  std::string pair;
  std::uint64_t seed = 0;
  std::optional<double> mcd_db;  // empty when the cell failed
  std::size_t param_count = 0;
  std::string error;
};

struct AblationReport {
  std::string matrix;
  std::vector<AblationRow> rows;
  // Header "variant,pair,mcd_db,param_count,seed"; failed cells read "failed".
  std::string csv() const;
  // Variants down, pairs across; each cell is the median MCD over seeds.
  std::string table() const;
};

// Mean MCD of converting `source` utterances against their parallel targets.
double corpus_mcd(const ConverterParams& g, const std::vector<MelSpectrogram>& source,
                  const NormStats& source_stats, const std::vector<MelSpectrogram>& target,
                  const NormStats& target_stats, int order = kDefaultCepstralOrder);

// Trains every (variant, seed) cell under out_dir/<variant>/seed_<s>, then
// reports MCD for both directions. A failing cell yields rows with an error
// and the others still run.
AblationReport run_ablation(const AblationMatrix& matrix, const AblationData& data,
                            const std::filesystem::path& out_dir, bool quiet = true);

}  // namespace maskvc
