#pragma once

// Deterministic two-domain harmonic corpora for desk-scale experiments.
//
// A "sentence" (from its own seed) fixes the duration, the f0 contour shape
// and a syllable-like amplitude envelope. A voice renders it: f0 scale,
// formant resonances shaping the harmonic amplitudes, spectral tilt. Training
// sentences of the two domains come from disjoint seed streams; evaluation
// sentences are rendered by both voices to give parallel reference pairs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maskvc/mel.hpp"

namespace maskvc {

struct VoiceParams {
  double f0_min_hz = 100.0;  // range the sentence's base f0 is drawn from
  double f0_max_hz = 150.0;
  double f0_scale = 1.0;  // multiplies every contour
  std::vector<double> formants_hz{600.0, 1400.0, 2600.0};
  double formant_bandwidth_hz = 250.0;
  double formant_shift = 1.0;  // multiplies every formant center
  double tilt = 0.6;           // harmonic h scaled by h^-tilt
  double max_harmonic_hz = 10800.0;  // keeps every mel bin below Nyquist voiced
};

struct SynthSpec {
  int n_utterances = 10;  // training utterances per domain
  int n_eval = 5;         // parallel evaluation pairs
  double min_duration_s = 1.0;
  double max_duration_s = 2.0;
  int sample_rate_hz = 22050;
  VoiceParams voice_a;
  VoiceParams voice_b = default_voice_b();
  double noise_floor = 1e-3;  // white-noise amplitude
  double peak = 0.5;          // peak amplitude of each rendered file
  std::uint64_t seed = 0;

  // Voice B: one octave up, formants shifted by 15%.
  static VoiceParams default_voice_b();
  // Throws Error(kConfig) unless counts and durations are positive, the
  // voices differ, and every frequency lies below Nyquist.
  void validate() const;
};

struct SynthUtterance {
  std::string file;    // relative path, e.g. "train/A/a_000.wav"
  std::string domain;  // "A" or "B"
  std::string split;   // "train" or "eval"
  std::uint64_t sentence_seed = 0;
  double f0_mean_hz = 0;
  double f0_min_hz = 0;
  double f0_max_hz = 0;
  double duration_s = 0;
  Waveform wav;
};

// Renders one sentence with one voice; f0 statistics are filled in.
SynthUtterance render_utterance(const SynthSpec& spec, const VoiceParams& voice,
                                std::uint64_t sentence_seed);

// All utterances: train A, train B, eval A, eval B, in that order.
std::vector<SynthUtterance> generate_corpus(const SynthSpec& spec);

// Writes the WAVs (16-bit PCM) under out_dir and manifest.csv with header
// "file,domain,split,sentence_seed,f0_mean_hz,f0_min_hz,f0_max_hz,duration_s".
// Returns the manifest rows (waveforms cleared).
std::vector<SynthUtterance> write_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

struct ManifestRow {
  std::string file;
  std::string domain;
  std::string split;
  std::uint64_t sentence_seed = 0;
  double f0_mean_hz = 0;
  double f0_min_hz = 0;
  double f0_max_hz = 0;
  double duration_s = 0;
};
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace maskvc
