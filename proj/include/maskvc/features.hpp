#pragma once

// Waveform <-> log-mel conversion, corpus normalization and feature files.
//
// Analysis convention: periodic Hann window, reflect padding of
// window_length / 2 on both ends, power spectrum, Slaney-style mel
// filterbank with area normalization, natural log after clamping at
// log_floor. A waveform of n samples gives 1 + n / hop_length frames.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "maskvc/mel.hpp"

namespace maskvc {

enum class WavEncoding { kPcm16, kFloat32 };

// Reads a mono 16-bit PCM or 32-bit float WAV file. Missing files raise kIo,
// multi-channel input and other encodings raise kFormat with distinct
// messages.
Waveform load_waveform(const std::filesystem::path& path);
void save_waveform(const std::filesystem::path& path, const Waveform& wav,
                   WavEncoding encoding = WavEncoding::kPcm16);

// Windowed-sinc sample-rate conversion.
Waveform resample(const Waveform& wav, int target_rate_hz);

// Returns wav unchanged when its rate matches; otherwise resamples if allowed
// and raises kData if not.
Waveform conform_rate(const Waveform& wav, int rate_hz, bool allow_resample);

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Dense mel_bins x (window_length / 2 + 1) filterbank, row-major.
struct MelFilterbank {
  int bins = 0;
  int fft_bins = 0;
  std::vector<double> weights;
  // Band edges (left, center, right) in Hz of filter i: edges[i], edges[i + 1], edges[i + 2].
  std::vector<double> edges_hz;

  double at(int bin, int k) const {
    return weights[static_cast<std::size_t>(bin) * fft_bins + k];
  }
};
MelFilterbank mel_filterbank(const StftConfig& cfg);

std::vector<double> hann_window(int length);

// Complex STFT, frame-major: values[frame * fft_bins + k].
struct Stft {
  int frames = 0;
  int fft_bins = 0;
  std::vector<std::complex<double>> values;
};
Stft stft(std::span<const float> samples, const StftConfig& cfg);
// Weighted overlap-add inverse; output has hop_length * (frames - 1) samples.
std::vector<float> istft(const Stft& spec, const StftConfig& cfg);

int frame_count(std::size_t samples, const StftConfig& cfg);

MelSpectrogram mel_spectrogram(const Waveform& wav, const StftConfig& cfg);

// Smallest std kept by compute_norm_stats; flatter bins are clamped to it.
inline constexpr double kMinStd = 1e-3;

// Streaming per-bin moments; merge() is order independent up to rounding.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(int bins = 0);
  void add(const MelSpectrogram& mel);
  void merge(const MomentAccumulator& other);
  std::uint64_t count() const { return count_; }
  int bins() const { return static_cast<int>(mean_.size()); }
  // Population statistics; bins with std below kMinStd are clamped and
  // reported through clamped_bins.
  NormStats finish(const std::string& corpus_id, std::vector<int>* clamped_bins = nullptr) const;

 private:
  std::uint64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

// Prints one warning line to stderr when any bin is clamped.
NormStats compute_norm_stats(std::span<const MelSpectrogram> corpus,
                             const std::string& corpus_id,
                             std::vector<int>* clamped_bins = nullptr);

MelSpectrogram normalize(const MelSpectrogram& mel, const NormStats& stats);
MelSpectrogram denormalize(const MelSpectrogram& mel, const NormStats& stats);

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats load_norm_stats(const std::filesystem::path& path);

inline constexpr int kFeatureFormatVersion = 1;

struct FeatureFile {
  MelSpectrogram mel;
  StftConfig stft;
  std::string norm_stats_id;
};

// Raw little-endian float32 values at `path`, text header at path + ".hdr".
void save_features(const std::filesystem::path& path, const FeatureFile& f);
FeatureFile load_features(const std::filesystem::path& path);
std::filesystem::path feature_header_path(const std::filesystem::path& path);

// Audition-quality inversion of a denormalized log-mel spectrogram: the
// power spectrum is recovered by non-negative least squares against the
// filterbank, then phase by Griffin-Lim starting from seeded random phase.
Waveform griffin_lim_audition(const MelSpectrogram& mel, const StftConfig& cfg, int iterations,
                              std::uint64_t seed = 0);

}  // namespace maskvc
