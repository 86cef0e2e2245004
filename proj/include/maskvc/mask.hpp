#pragma once

// Mask families and size policies for the filling-in-frames auxiliary task.
//
//   FIF     one contiguous run of whole frames is zeroed
//   FIF_NS  k frames drawn without replacement are zeroed
//   FIS     one contiguous band of whole mel bins is zeroed
//   FIP     each cell is zeroed independently with probability s/100
//
// Size s is either constant (s = X) or redrawn per call from U[0, X].
// Frame/bin counts use round-half-up: k = floor(T * s / 100 + 0.5).

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maskvc/mel.hpp"
#include "maskvc/rng.hpp"

namespace maskvc {

enum class MaskFamily { kFif, kFifNs, kFis, kFip };
enum class SizeMode { kConstant, kUniform };

struct MaskPolicy {
  MaskFamily family = MaskFamily::kFif;
  SizeMode size_mode = SizeMode::kUniform;
  double x_percent = 50.0;

  // "FIF 0-50", "FIF 25", "FIS 0-50", ... ; round-trips through parse().
  std::string label() const;
  // Accepts the label form; throws Error(kConfig) on anything else.
  static MaskPolicy parse(std::string_view text);
  void validate() const;
  bool operator==(const MaskPolicy&) const = default;
};

std::string_view family_name(MaskFamily f);

struct Mask {
  int bins = 0;
  int frames = 0;
  std::vector<float> values;  // exactly 0.0f or 1.0f, bin-major
  MaskPolicy policy;
  double size_percent = 0.0;  // realized s
  int zero_start = 0;         // first zeroed frame (FIF) or bin (FIS)
  int zero_extent = 0;        // k frames (FIF, FIF_NS) or k' bins (FIS)
  std::uint64_t seed_trace = 0;

  float at(int bin, int frame) const {
    return values[static_cast<std::size_t>(bin) * frames + frame];
  }
  std::size_t zero_count() const;
};

struct MaskedMel {
  int bins = 0;
  int frames = 0;
  std::vector<float> values;
  Mask source_mask;
};

// Rounds half up: floor(extent * percent / 100 + 0.5).
int mask_extent(int extent, double percent);

// The RNG's next output is recorded in Mask::seed_trace before sampling.
Mask sample_mask(const MaskPolicy& policy, int bins, int frames, Rng& rng);
Mask sample_mask(const MaskPolicy& policy, int bins, int frames, std::uint64_t seed);

Mask all_ones_mask(int bins, int frames);

MaskedMel apply_mask(const MelSpectrogram& x, const Mask& m);

}  // namespace maskvc
