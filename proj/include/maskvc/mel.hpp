#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace maskvc {

struct Waveform {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate_hz = 22050;
};

struct StftConfig {
  int sample_rate_hz = 22050;
  int window_length = 1024;
  int hop_length = 256;
  int mel_bins = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 11025.0;
  // Clamp applied to power-mel energies before the log.
  double log_floor = 1e-5;

  // Throws Error(kConfig) when an invariant is violated.
  void validate() const;
  // "key = value" lines; parse_text() accepts the same form.
  std::string to_text() const;
  static StftConfig parse_text(std::string_view text);
  bool operator==(const StftConfig&) const = default;
};

// F x T log-mel matrix, bin-major: values[bin * frames + frame].
struct MelSpectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<float> values;
  std::string domain;
  bool normalized = false;

  MelSpectrogram() = default;
  MelSpectrogram(int f, int t)
      : bins(f), frames(t), values(static_cast<std::size_t>(f) * t, 0.0f) {}

  float& at(int bin, int frame) { return values[static_cast<std::size_t>(bin) * frames + frame]; }
  float at(int bin, int frame) const {
    return values[static_cast<std::size_t>(bin) * frames + frame];
  }
};

// Per-bin corpus statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::string corpus_id;
};

}  // namespace maskvc
