#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "maskvc/error.hpp"
#include "maskvc/features.hpp"
#include "maskvc/rng.hpp"

namespace maskvc {
namespace {

constexpr double kPi = 3.14159265358979323846;

// FFTW plans are created once per size under a lock; executing a plan on
// caller-owned arrays through the new-array interface is thread safe.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::vector<double> r(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> c(static_cast<std::size_t>(n / 2 + 1));
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fwd_ = fftw_plan_dft_r2c_1d(n, r.data(), as_fftw(c.data()), flags);
    inv_ = fftw_plan_dft_c2r_1d(n, as_fftw(c.data()), r.data(), flags);
    if (fwd_ == nullptr || inv_ == nullptr) throw Error(ErrorKind::kNumeric, "FFT planning failed");
  }
  ~RealFft() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(fwd_, in, as_fftw(out));
  }
  // Unnormalized; `in` is clobbered.
  void inverse(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(inv_, as_fftw(in), out);
  }
  int size() const { return n_; }

 private:
  static fftw_complex* as_fftw(std::complex<double>* p) {
    return reinterpret_cast<fftw_complex*>(p);
  }
  int n_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

const RealFft& fft_of_size(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<RealFft>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

// Reflect padding without repeating the edge sample.
double reflected(std::span<const float> x, std::int64_t i) {
  const auto n = static_cast<std::int64_t>(x.size());
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return x[static_cast<std::size_t>(i)];
}

}  // namespace

double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / f_sp;
  return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * f_sp;
  return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

MelFilterbank mel_filterbank(const StftConfig& cfg) {
  cfg.validate();
  MelFilterbank fb;
  fb.bins = cfg.mel_bins;
  fb.fft_bins = cfg.window_length / 2 + 1;
  fb.weights.assign(static_cast<std::size_t>(fb.bins) * fb.fft_bins, 0.0);
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.fmax_hz);
  fb.edges_hz.resize(static_cast<std::size_t>(fb.bins) + 2);
  for (int i = 0; i < fb.bins + 2; ++i)
    fb.edges_hz[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (fb.bins + 1));
  for (int m = 0; m < fb.bins; ++m) {
    const double left = fb.edges_hz[static_cast<std::size_t>(m)];
    const double center = fb.edges_hz[static_cast<std::size_t>(m) + 1];
    const double right = fb.edges_hz[static_cast<std::size_t>(m) + 2];
    const double area = 2.0 / (right - left);
    for (int k = 0; k < fb.fft_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate_hz / cfg.window_length;
      const double w = std::min((f - left) / (center - left), (right - f) / (right - center));
      if (w > 0) fb.weights[static_cast<std::size_t>(m) * fb.fft_bins + k] = w * area;
    }
  }
  return fb;
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2 * kPi * i / length);
  return w;
}

int frame_count(std::size_t samples, const StftConfig& cfg) {
  return 1 + static_cast<int>(samples / static_cast<std::size_t>(cfg.hop_length));
}

Stft stft(std::span<const float> samples, const StftConfig& cfg) {
  cfg.validate();
  const int n = cfg.window_length;
  if (samples.size() < static_cast<std::size_t>(n))
    throw Error(ErrorKind::kData, "waveform of " + std::to_string(samples.size()) +
                                      " samples is shorter than one window (" +
                                      std::to_string(n) + ")");
  const auto& fft = fft_of_size(n);
  const auto window = hann_window(n);
  Stft out;
  out.frames = frame_count(samples.size(), cfg);
  out.fft_bins = n / 2 + 1;
  out.values.resize(static_cast<std::size_t>(out.frames) * out.fft_bins);
  std::vector<double> frame(static_cast<std::size_t>(n));
  const std::int64_t pad = n / 2;
  for (int t = 0; t < out.frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * cfg.hop_length - pad;
    for (int i = 0; i < n; ++i)
      frame[static_cast<std::size_t>(i)] = reflected(samples, start + i) * window[static_cast<std::size_t>(i)];
    fft.forward(frame.data(), out.values.data() + static_cast<std::size_t>(t) * out.fft_bins);
  }
  return out;
}

std::vector<float> istft(const Stft& spec, const StftConfig& cfg) {
  cfg.validate();
  const int n = cfg.window_length;
  if (spec.fft_bins != n / 2 + 1 || spec.frames < 1)
    throw Error(ErrorKind::kData, "STFT shape does not match the window length");
  const auto& fft = fft_of_size(n);
  const auto window = hann_window(n);
  const std::size_t hop = static_cast<std::size_t>(cfg.hop_length);
  const std::size_t total = static_cast<std::size_t>(n) + hop * (spec.frames - 1);
  std::vector<double> acc(total, 0.0), wsum(total, 0.0);
  std::vector<std::complex<double>> bins(static_cast<std::size_t>(spec.fft_bins));
  std::vector<double> frame(static_cast<std::size_t>(n));
  for (int t = 0; t < spec.frames; ++t) {
    std::copy_n(spec.values.begin() + static_cast<std::ptrdiff_t>(t) * spec.fft_bins, spec.fft_bins, bins.begin());
    fft.inverse(bins.data(), frame.data());
    const std::size_t off = hop * static_cast<std::size_t>(t);
    for (int i = 0; i < n; ++i) {
      const double w = window[static_cast<std::size_t>(i)];
      acc[off + i] += frame[static_cast<std::size_t>(i)] / n * w;
      wsum[off + i] += w * w;
    }
  }
  const std::size_t pad = static_cast<std::size_t>(n / 2);
  std::vector<float> out(hop * (spec.frames - 1));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double w = wsum[i + pad];
    out[i] = static_cast<float>(w > 1e-10 ? acc[i + pad] / w : 0.0);
  }
  return out;
}

MelSpectrogram mel_spectrogram(const Waveform& wav, const StftConfig& cfg) {
  if (wav.sample_rate_hz != cfg.sample_rate_hz)
    throw Error(ErrorKind::kData, "waveform rate " + std::to_string(wav.sample_rate_hz) +
                                      " Hz differs from the STFT rate " +
                                      std::to_string(cfg.sample_rate_hz) + " Hz");
  const Stft s = stft(wav.samples, cfg);
  const MelFilterbank fb = mel_filterbank(cfg);
  MelSpectrogram mel(cfg.mel_bins, s.frames);
  std::vector<double> power(static_cast<std::size_t>(s.fft_bins));
  for (int t = 0; t < s.frames; ++t) {
    for (int k = 0; k < s.fft_bins; ++k)
      power[static_cast<std::size_t>(k)] = std::norm(s.values[static_cast<std::size_t>(t) * s.fft_bins + k]);
    for (int m = 0; m < fb.bins; ++m) {
      double e = 0;
      for (int k = 0; k < fb.fft_bins; ++k) e += fb.at(m, k) * power[static_cast<std::size_t>(k)];
      mel.at(m, t) = static_cast<float>(std::log(std::max(e, cfg.log_floor)));
    }
  }
  return mel;
}

Waveform griffin_lim_audition(const MelSpectrogram& mel, const StftConfig& cfg, int iterations,
                              std::uint64_t seed) {
  if (mel.normalized) throw Error(ErrorKind::kData, "Griffin-Lim needs a denormalized spectrogram");
  if (mel.bins != cfg.mel_bins || mel.frames < 1 ||
      mel.values.size() != static_cast<std::size_t>(mel.bins) * mel.frames)
    throw Error(ErrorKind::kData, "spectrogram shape does not match the STFT config");
  if (iterations < 0) throw Error(ErrorKind::kUsage, "iterations must be >= 0");
  const MelFilterbank fb = mel_filterbank(cfg);
  const int K = fb.fft_bins;
  // Support of each filter row.
  std::vector<int> lo(static_cast<std::size_t>(fb.bins), K), hi(static_cast<std::size_t>(fb.bins), 0);
  for (int m = 0; m < fb.bins; ++m)
    for (int k = 0; k < K; ++k)
      if (fb.at(m, k) > 0) {
        lo[static_cast<std::size_t>(m)] = std::min(lo[static_cast<std::size_t>(m)], k);
        hi[static_cast<std::size_t>(m)] = k + 1;
      }

  // Per-frame multiplicative-update NNLS: power >= 0 minimizing |fb p - e|^2.
  Stft spec;
  spec.frames = mel.frames;
  spec.fft_bins = K;
  spec.values.assign(static_cast<std::size_t>(mel.frames) * K, 0.0);
  std::vector<double> magnitude(spec.values.size());
  std::vector<double> e(static_cast<std::size_t>(fb.bins)), p(static_cast<std::size_t>(K)),
      num(static_cast<std::size_t>(K)), den(static_cast<std::size_t>(K)), fp(static_cast<std::size_t>(fb.bins));
  constexpr int kNnlsIterations = 100;
  for (int t = 0; t < mel.frames; ++t) {
    for (int m = 0; m < fb.bins; ++m) e[static_cast<std::size_t>(m)] = std::exp(static_cast<double>(mel.at(m, t)));
    std::fill(num.begin(), num.end(), 0.0);
    for (int m = 0; m < fb.bins; ++m)
      for (int k = lo[static_cast<std::size_t>(m)]; k < hi[static_cast<std::size_t>(m)]; ++k)
        num[static_cast<std::size_t>(k)] += fb.at(m, k) * e[static_cast<std::size_t>(m)];
    p = num;
    for (int it = 0; it < kNnlsIterations; ++it) {
      for (int m = 0; m < fb.bins; ++m) {
        double acc = 0;
        for (int k = lo[static_cast<std::size_t>(m)]; k < hi[static_cast<std::size_t>(m)]; ++k)
          acc += fb.at(m, k) * p[static_cast<std::size_t>(k)];
        fp[static_cast<std::size_t>(m)] = acc;
      }
      std::fill(den.begin(), den.end(), 0.0);
      for (int m = 0; m < fb.bins; ++m)
        for (int k = lo[static_cast<std::size_t>(m)]; k < hi[static_cast<std::size_t>(m)]; ++k)
          den[static_cast<std::size_t>(k)] += fb.at(m, k) * fp[static_cast<std::size_t>(m)];
      for (int k = 0; k < K; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        if (den[kk] > 0) p[kk] *= num[kk] / den[kk];
      }
    }
    for (int k = 0; k < K; ++k)
      magnitude[static_cast<std::size_t>(t) * K + k] = std::sqrt(std::max(p[static_cast<std::size_t>(k)], 0.0));
  }

  Rng rng(seed);
  for (std::size_t i = 0; i < spec.values.size(); ++i)
    spec.values[i] = std::polar(magnitude[i], 2 * kPi * uniform01(rng));
  Waveform out;
  out.sample_rate_hz = cfg.sample_rate_hz;
  out.samples = istft(spec, cfg);
  const int needed = cfg.window_length;
  for (int it = 0; it < iterations && static_cast<int>(out.samples.size()) >= needed; ++it) {
    const Stft est = stft(out.samples, cfg);
    for (int t = 0; t < std::min(est.frames, spec.frames); ++t)
      for (int k = 0; k < K; ++k) {
        const std::size_t i = static_cast<std::size_t>(t) * K + k;
        const double a = std::abs(est.values[i]);
        spec.values[i] = a > 0 ? est.values[i] * (magnitude[i] / a) : std::complex<double>(magnitude[i], 0);
      }
    out.samples = istft(spec, cfg);
  }
  return out;
}

}  // namespace maskvc
