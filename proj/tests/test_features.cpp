#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "maskvc/error.hpp"
#include "maskvc/features.hpp"
#include "maskvc/rng.hpp"
#include "support/tmpdir.hpp"

using namespace maskvc;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Minimal independent WAV writer: format tag, channel count, bit depth and
// raw sample bytes are written verbatim.
void write_raw_wav(const fs::path& p, std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                   std::uint16_t bits, const std::vector<char>& data) {
  std::ofstream out(p, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  out.write("RIFF", 4);
  u32(36 + static_cast<std::uint32_t>(data.size()));
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(bits);
  out.write("data", 4);
  u32(static_cast<std::uint32_t>(data.size()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

std::vector<char> pcm16_bytes(const std::vector<std::int16_t>& s) {
  std::vector<char> b(s.size() * 2);
  std::memcpy(b.data(), s.data(), b.size());
  return b;
}

Waveform tone(double hz, std::size_t n, int rate = 22050, double amp = 0.5) {
  Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(amp * std::sin(2 * kPi * hz * i / rate));
  return w;
}

// Slaney mel scale written from its definition: 3 mels per 200 Hz below
// 1 kHz, then 27 mels per factor 6.4.
double oracle_mel(double f) { return f < 1000 ? 3 * f / 200 : 15 + 27 * std::log(f / 1000) / std::log(6.4); }
double oracle_hz(double m) { return m < 15 ? 200 * m / 3 : 1000 * std::pow(6.4, (m - 15) / 27); }

// Frequency with the largest windowed DFT magnitude in [lo, hi], 0.5 Hz grid.
double dft_peak_hz(const std::vector<float>& x, int rate, double lo, double hi) {
  const std::size_t n = std::min<std::size_t>(x.size(), 8192);
  const std::size_t off = (x.size() - n) / 2;
  double best = -1, best_f = 0;
  for (double f = lo; f <= hi; f += 0.5) {
    double re = 0, im = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2 * kPi * i / n);
      const double ph = 2 * kPi * f * i / rate;
      re += w * x[off + i] * std::cos(ph);
      im -= w * x[off + i] * std::sin(ph);
    }
    const double mag = re * re + im * im;
    if (mag > best) {
      best = mag;
      best_f = f;
    }
  }
  return best_f;
}

MelSpectrogram random_mel(int f, int t, Rng& rng, double scale = 3.0, double shift = -4.0) {
  MelSpectrogram m(f, t);
  for (float& v : m.values) v = static_cast<float>(shift + scale * normal01(rng));
  return m;
}

template <typename Fn>
std::pair<ErrorKind, std::string> error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return {e.kind(), e.what()};
  }
  FAIL("expected an Error");
  return {ErrorKind::kUsage, ""};
}

}  // namespace

TEST_CASE("WAV loading") {
  testing::TempDir dir("wav");
  SUBCASE("one second of 16-bit mono") {
    std::vector<std::int16_t> s(22050);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<std::int16_t>(static_cast<int>(i % 2000) - 1000);
    write_raw_wav(dir.path() / "a.wav", 1, 1, 22050, 16, pcm16_bytes(s));
    const auto w = load_waveform(dir.path() / "a.wav");
    CHECK(w.samples.size() == 22050);
    CHECK(w.sample_rate_hz == 22050);
    for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(w.samples[i] == static_cast<float>(s[i]) / 32768.0f);
  }
  SUBCASE("all-zero PCM gives exact zeros") {
    write_raw_wav(dir.path() / "z.wav", 1, 1, 22050, 16, std::vector<char>(2000, 0));
    const auto w = load_waveform(dir.path() / "z.wav");
    CHECK(w.samples.size() == 1000);
    CHECK(std::all_of(w.samples.begin(), w.samples.end(), [](float v) { return v == 0.0f; }));
  }
  SUBCASE("32-bit float") {
    std::vector<float> s{0.25f, -0.5f, 0.125f, 1.0f};
    std::vector<char> b(s.size() * 4);
    std::memcpy(b.data(), s.data(), b.size());
    write_raw_wav(dir.path() / "f.wav", 3, 1, 16000, 32, b);
    const auto w = load_waveform(dir.path() / "f.wav");
    CHECK(w.samples == s);
    CHECK(w.sample_rate_hz == 16000);
  }
  SUBCASE("distinct failures") {
    write_raw_wav(dir.path() / "st.wav", 1, 2, 22050, 16, std::vector<char>(400, 0));
    const auto [k1, m1] = error_of([&] { load_waveform(dir.path() / "st.wav"); });
    CHECK(k1 == ErrorKind::kFormat);
    CHECK(m1.find("non-mono input") != std::string::npos);
    write_raw_wav(dir.path() / "u8.wav", 1, 1, 22050, 8, std::vector<char>(400, 0));
    const auto [k2, m2] = error_of([&] { load_waveform(dir.path() / "u8.wav"); });
    CHECK(k2 == ErrorKind::kFormat);
    CHECK(m2.find("unsupported encoding") != std::string::npos);
    const auto [k3, m3] = error_of([&] { load_waveform(dir.path() / "missing.wav"); });
    CHECK(k3 == ErrorKind::kIo);
    std::ofstream(dir.path() / "junk.wav") << "hello world, not audio";
    CHECK(error_of([&] { load_waveform(dir.path() / "junk.wav"); }).first == ErrorKind::kFormat);
  }
  SUBCASE("save round trips") {
    Rng rng(1);
    Waveform w;
    w.samples.resize(777);
    for (float& v : w.samples) v = static_cast<float>(2 * uniform01(rng) - 1);
    save_waveform(dir.path() / "f.wav", w, WavEncoding::kFloat32);
    CHECK(load_waveform(dir.path() / "f.wav").samples == w.samples);
    save_waveform(dir.path() / "p.wav", w, WavEncoding::kPcm16);
    const auto back = load_waveform(dir.path() / "p.wav");
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      REQUIRE(std::abs(back.samples[i] - w.samples[i]) <= 0.5f / 32768.0f + 1e-7f);
  }
}

TEST_CASE("sample-rate handling") {
  const auto w = tone(440, 44100, 44100);
  CHECK(error_of([&] { conform_rate(w, 22050, false); }).first == ErrorKind::kData);
  const auto r = conform_rate(w, 22050, true);
  CHECK(r.sample_rate_hz == 22050);
  CHECK(r.samples.size() == 22050);
  CHECK(std::abs(dft_peak_hz(r.samples, 22050, 300, 600) - 440) <= 1.0);
  // A component above the new Nyquist is removed.
  const auto hi = conform_rate(tone(15000, 44100, 44100), 22050, true);
  double rms = 0;
  for (std::size_t i = 1000; i < hi.samples.size() - 1000; ++i) rms += hi.samples[i] * hi.samples[i];
  CHECK(std::sqrt(rms / (hi.samples.size() - 2000)) < 0.01);
  CHECK(conform_rate(w, 44100, false).samples == w.samples);
}

TEST_CASE("frame count") {
  const StftConfig cfg;
  CHECK(frame_count(22050, cfg) == 87);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto len = static_cast<std::size_t>(uniform_int(rng, cfg.window_length, 30000));
    const int pad = cfg.window_length / 2;
    const int expect = 1 + static_cast<int>((len + 2 * pad - cfg.window_length) / cfg.hop_length);
    Waveform w;
    w.samples.assign(len, 0.0f);
    const auto mel = mel_spectrogram(w, cfg);
    REQUIRE(mel.frames == expect);
    REQUIRE(mel.bins == 80);
  }
  Waveform shortw;
  shortw.samples.assign(1023, 0.0f);
  CHECK(error_of([&] { mel_spectrogram(shortw, cfg); }).first == ErrorKind::kData);
}

TEST_CASE("digital silence maps to log(log_floor)") {
  const StftConfig cfg;
  Waveform w;
  w.samples.assign(22050, 0.0f);
  const auto mel = mel_spectrogram(w, cfg);
  CHECK(mel.frames == 87);
  const float expect = static_cast<float>(std::log(cfg.log_floor));
  CHECK(std::all_of(mel.values.begin(), mel.values.end(), [&](float v) { return v == expect; }));
}

TEST_CASE("a 440 Hz tone peaks in the band containing 440 Hz") {
  const StftConfig cfg;
  // Oracle band edges: 82 points equally spaced on the mel scale.
  const double top = oracle_mel(cfg.fmax_hz);
  std::vector<double> edge(82);
  for (int i = 0; i < 82; ++i) edge[static_cast<std::size_t>(i)] = oracle_hz(top * i / 81.0);
  const auto mel = mel_spectrogram(tone(440, 22050), cfg);
  for (int t = 0; t < mel.frames; ++t) {
    int arg = 0;
    for (int m = 1; m < mel.bins; ++m)
      if (mel.at(m, t) > mel.at(arg, t)) arg = m;
    REQUIRE(edge[static_cast<std::size_t>(arg)] < 440);
    REQUIRE(440 < edge[static_cast<std::size_t>(arg) + 2]);
  }
}

TEST_CASE("mel scale and filterbank") {
  for (double f : {0.0, 100.0, 440.0, 999.0, 1000.0, 2500.0, 11025.0}) {
    CHECK(hz_to_mel(f) == doctest::Approx(oracle_mel(f)).epsilon(1e-12));
    CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-12));
  }
  for (const auto& [lo, hi, bins] : {std::tuple{0.0, 11025.0, 80}, std::tuple{300.0, 8000.0, 40},
                                    std::tuple{0.0, 5000.0, 128}}) {
    StftConfig cfg;
    cfg.fmin_hz = lo;
    cfg.fmax_hz = hi;
    cfg.mel_bins = bins;
    const auto fb = mel_filterbank(cfg);
    CHECK(fb.fft_bins == 513);
    CHECK(std::all_of(fb.weights.begin(), fb.weights.end(), [](double w) { return w >= 0; }));
    for (int k = 0; k < fb.fft_bins; ++k) {
      const double f = k * 22050.0 / 1024;
      double col = 0;
      for (int m = 0; m < fb.bins; ++m) col += fb.at(m, k);
      if (f > lo && f < hi) REQUIRE(col > 0);
      if (f < lo || f > hi) REQUIRE(col == 0);
    }
    // Each triangle integrates to about one (area normalization).
    for (int m = 0; m < fb.bins; ++m) {
      const double width = fb.edges_hz[static_cast<std::size_t>(m) + 2] - fb.edges_hz[static_cast<std::size_t>(m)];
      if (width < 8 * 22050.0 / 1024) continue;  // too narrow to integrate on the grid
      double area = 0;
      for (int k = 0; k < fb.fft_bins; ++k) area += fb.at(m, k) * 22050.0 / 1024;
      CHECK(area == doctest::Approx(1.0).epsilon(0.1));
    }
  }
}

TEST_CASE("mel_spectrogram is deterministic and finite") {
  Rng rng(3);
  Waveform w;
  w.samples.resize(30000);
  for (float& v : w.samples) v = static_cast<float>(0.3 * normal01(rng));
  const auto a = mel_spectrogram(w, StftConfig{});
  const auto b = mel_spectrogram(w, StftConfig{});
  CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * 4) == 0);
  CHECK(std::all_of(a.values.begin(), a.values.end(), [](float v) { return std::isfinite(v); }));
  Waveform other = w;
  other.sample_rate_hz = 16000;
  CHECK(error_of([&] { mel_spectrogram(other, StftConfig{}); }).first == ErrorKind::kData);
}

TEST_CASE("istft inverts stft away from the edges") {
  Rng rng(4);
  std::vector<float> x(20000);
  for (float& v : x) v = static_cast<float>(normal01(rng) * 0.2);
  const StftConfig cfg;
  const auto y = istft(stft(x, cfg), cfg);
  REQUIRE(y.size() == 256u * (frame_count(x.size(), cfg) - 1));
  double err = 0;
  for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(double(y[i]) - x[i]));
  CHECK(err < 1e-5);
}

TEST_CASE("norm stats") {
  SUBCASE("constant corpus clamps std") {
    MelSpectrogram m(4, 10);
    std::fill(m.values.begin(), m.values.end(), 2.5f);
    std::vector<int> clamped;
    const auto s = compute_norm_stats(std::vector{m}, "c", &clamped);
    for (int b = 0; b < 4; ++b) {
      CHECK(s.mean[static_cast<std::size_t>(b)] == 2.5);
      CHECK(s.std[static_cast<std::size_t>(b)] == kMinStd);
    }
    CHECK(clamped == std::vector<int>{0, 1, 2, 3});
    CHECK(s.corpus_id == "c");
  }
  SUBCASE("two-point statistics") {
    MelSpectrogram a(3, 1), b(3, 1);
    std::fill(b.values.begin(), b.values.end(), 2.0f);
    const auto s = compute_norm_stats(std::vector{a, b}, "two");
    for (int i = 0; i < 3; ++i) {
      CHECK(s.mean[static_cast<std::size_t>(i)] == 1.0);
      CHECK(s.std[static_cast<std::size_t>(i)] == 1.0);
    }
  }
  SUBCASE("normalizing then restating gives zero mean, unit std") {
    Rng rng(5);
    std::vector<MelSpectrogram> corpus;
    for (int i = 0; i < 6; ++i) corpus.push_back(random_mel(80, static_cast<int>(uniform_int(rng, 20, 200)), rng));
    const auto s = compute_norm_stats(corpus, "r");
    std::vector<MelSpectrogram> normed;
    for (const auto& m : corpus) {
      auto n = normalize(m, s);
      n.normalized = false;  // restat the normalized values
      normed.push_back(n);
    }
    const auto s2 = compute_norm_stats(normed, "r2");
    for (int b = 0; b < 80; ++b) {
      REQUIRE(std::abs(s2.mean[static_cast<std::size_t>(b)]) < 1e-6);
      REQUIRE(std::abs(s2.std[static_cast<std::size_t>(b)] - 1) < 1e-6);
    }
  }
  SUBCASE("streaming merge matches a two-pass oracle in any order") {
    Rng rng(6);
    std::vector<MelSpectrogram> corpus;
    for (int i = 0; i < 7; ++i) corpus.push_back(random_mel(5, static_cast<int>(uniform_int(rng, 1, 50)), rng, 1.0, 100.0));
    std::vector<double> mean(5, 0), var(5, 0);
    long n = 0;
    for (const auto& m : corpus) n += m.frames;
    for (int b = 0; b < 5; ++b) {
      for (const auto& m : corpus)
        for (int t = 0; t < m.frames; ++t) mean[static_cast<std::size_t>(b)] += m.at(b, t);
      mean[static_cast<std::size_t>(b)] /= static_cast<double>(n);
      for (const auto& m : corpus)
        for (int t = 0; t < m.frames; ++t) {
          const double d = m.at(b, t) - mean[static_cast<std::size_t>(b)];
          var[static_cast<std::size_t>(b)] += d * d;
        }
      var[static_cast<std::size_t>(b)] /= static_cast<double>(n);
    }
    MomentAccumulator left(5), right(5), all(5);
    for (std::size_t i = 0; i < corpus.size(); ++i) (i % 2 ? left : right).add(corpus[i]);
    for (auto it = corpus.rbegin(); it != corpus.rend(); ++it) all.add(*it);
    MomentAccumulator ab = left, ba = right;
    ab.merge(right);
    ba.merge(left);
    for (const auto* acc : {&ab, &ba, &all}) {
      const auto s = acc->finish("m");
      CHECK(acc->count() == static_cast<std::uint64_t>(n));
      for (int b = 0; b < 5; ++b) {
        CHECK(s.mean[static_cast<std::size_t>(b)] == doctest::Approx(mean[static_cast<std::size_t>(b)]).epsilon(1e-13));
        CHECK(s.std[static_cast<std::size_t>(b)] == doctest::Approx(std::sqrt(var[static_cast<std::size_t>(b)])).epsilon(1e-10));
      }
    }
  }
  SUBCASE("errors") {
    CHECK(error_of([] { compute_norm_stats({}, "e"); }).first == ErrorKind::kData);
    MelSpectrogram m(3, 3);
    m.normalized = true;
    CHECK(error_of([&] { compute_norm_stats(std::vector{m}, "e"); }).first == ErrorKind::kData);
    MelSpectrogram a(3, 3), b(4, 3);
    CHECK(error_of([&] { compute_norm_stats(std::vector{a, b}, "e"); }).first == ErrorKind::kData);
  }
}

TEST_CASE("normalize / denormalize") {
  Rng rng(7);
  const auto m = random_mel(80, 60, rng);
  NormStats s;
  for (int b = 0; b < 80; ++b) {
    s.mean.push_back(-4 + normal01(rng));
    s.std.push_back(0.5 + uniform01(rng) * 3);
  }
  const auto n = normalize(m, s);
  CHECK(n.normalized);
  for (int i = 0; i < 500; ++i) {
    const int b = static_cast<int>(uniform_int(rng, 0, 79));
    const int t = static_cast<int>(uniform_int(rng, 0, 59));
    const double oracle = (double(m.at(b, t)) - s.mean[static_cast<std::size_t>(b)]) / s.std[static_cast<std::size_t>(b)];
    REQUIRE(std::abs(n.at(b, t) - oracle) < 1e-6);
  }
  const auto back = denormalize(n, s);
  CHECK_FALSE(back.normalized);
  double err = 0;
  for (std::size_t i = 0; i < m.values.size(); ++i) err = std::max(err, double(std::abs(back.values[i] - m.values[i])));
  CHECK(err < 1e-6);
  MelSpectrogram at_mean(80, 1);
  for (int b = 0; b < 80; ++b) at_mean.at(b, 0) = static_cast<float>(s.mean[static_cast<std::size_t>(b)]);
  const auto z = normalize(at_mean, s);
  for (float v : z.values) CHECK(std::abs(v) < 1e-6);
  CHECK(error_of([&] { normalize(n, s); }).first == ErrorKind::kData);
  CHECK(error_of([&] { denormalize(m, s); }).first == ErrorKind::kData);
  NormStats narrow{{0.0}, {1.0}, "n"};
  CHECK(error_of([&] { normalize(m, narrow); }).first == ErrorKind::kData);
}

TEST_CASE("feature and stats files") {
  testing::TempDir dir("feat");
  Rng rng(8);
  FeatureFile f;
  f.mel = random_mel(80, 87, rng);
  f.mel.values[5] = -0.0f;
  f.mel.values[6] = 1e-40f;  // subnormal survives bit-exactly
  f.mel.domain = "X";
  f.mel.normalized = true;
  f.stft.log_floor = 1e-6;
  f.norm_stats_id = "corpus-x";
  const auto p = dir.path() / "u.f32";
  save_features(p, f);
  CHECK(fs::file_size(p) == 80u * 87u * 4u);
  const auto g = load_features(p);
  CHECK(std::memcmp(g.mel.values.data(), f.mel.values.data(), f.mel.values.size() * 4) == 0);
  CHECK(g.mel.bins == 80);
  CHECK(g.mel.frames == 87);
  CHECK(g.mel.domain == "X");
  CHECK(g.mel.normalized);
  CHECK(g.stft == f.stft);
  CHECK(g.norm_stats_id == "corpus-x");

  {
    std::ofstream trunc(p, std::ios::binary | std::ios::trunc);
    trunc.write("abcd", 4);
  }
  CHECK(error_of([&] { load_features(p); }).first == ErrorKind::kFormat);
  save_features(p, f);
  {
    std::ifstream in(feature_header_path(p));
    std::string text((std::istreambuf_iterator<char>(in)), {});
    text.replace(text.find("format_version = 1"), 18, "format_version = 9");
    std::ofstream(feature_header_path(p), std::ios::trunc) << text;
  }
  CHECK(error_of([&] { load_features(p); }).first == ErrorKind::kFormat);
  CHECK(error_of([&] { load_features(dir.path() / "none.f32"); }).first == ErrorKind::kIo);

  NormStats s;
  for (int b = 0; b < 80; ++b) {
    s.mean.push_back(normal01(rng) / 3);
    s.std.push_back(0.1 + uniform01(rng));
  }
  s.corpus_id = "y";
  save_norm_stats(dir.path() / "s.json", s);
  const auto t = load_norm_stats(dir.path() / "s.json");
  CHECK(t.mean == s.mean);
  CHECK(t.std == s.std);
  CHECK(t.corpus_id == "y");
  std::ofstream(dir.path() / "bad.json") << "{\"format_version\": 1, \"corpus_id\": \"z\", \"mean\": [0], \"std\": [0]}";
  CHECK(error_of([&] { load_norm_stats(dir.path() / "bad.json"); }).first == ErrorKind::kFormat);
}

TEST_CASE("Griffin-Lim audition") {
  const StftConfig cfg;
  SUBCASE("440 Hz round trip keeps the dominant frequency within one STFT bin") {
    const auto mel = mel_spectrogram(tone(440, 22050), cfg);
    const auto w = griffin_lim_audition(mel, cfg, 32, 1);
    CHECK(w.samples.size() == 256u * 86u);
    const double peak = dft_peak_hz(w.samples, 22050, 50, 4000);
    CHECK(std::abs(peak - 440) <= 22050.0 / 1024);
  }
  SUBCASE("floor spectrogram gives near silence") {
    MelSpectrogram mel(80, 40);
    std::fill(mel.values.begin(), mel.values.end(), static_cast<float>(std::log(cfg.log_floor)));
    const auto w = griffin_lim_audition(mel, cfg, 8, 2);
    double rms = 0;
    for (float v : w.samples) rms += double(v) * v;
    CHECK(std::sqrt(rms / w.samples.size()) < 1e-3);
  }
  SUBCASE("zero iterations is deterministic given the seed") {
    Rng rng(9);
    const auto mel = random_mel(80, 20, rng, 1.0, -3.0);
    const auto a = griffin_lim_audition(mel, cfg, 0, 5);
    const auto b = griffin_lim_audition(mel, cfg, 0, 5);
    const auto c = griffin_lim_audition(mel, cfg, 0, 6);
    CHECK(a.samples == b.samples);
    CHECK(a.samples != c.samples);
  }
  SUBCASE("shape checks") {
    MelSpectrogram mel(40, 10);
    CHECK(error_of([&] { griffin_lim_audition(mel, cfg, 1); }).first == ErrorKind::kData);
    MelSpectrogram n(80, 10);
    n.normalized = true;
    CHECK(error_of([&] { griffin_lim_audition(n, cfg, 1); }).first == ErrorKind::kData);
  }
}
