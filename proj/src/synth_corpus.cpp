#include "maskvc/synth_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "maskvc/error.hpp"
#include "maskvc/features.hpp"
#include "maskvc/rng.hpp"

namespace maskvc {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kStreamA = 0x5452'4e41;     // "TRNA"
constexpr std::uint64_t kStreamB = 0x5452'4e42;     // "TRNB"
constexpr std::uint64_t kStreamEval = 0x4556'4c53;  // "EVLS"
constexpr std::uint64_t kStreamNoise = 0x4e4f'4953; // "NOIS"
constexpr int kBlock = 64;                          // samples per amplitude update

struct Syllable {
  std::size_t begin = 0;
  std::size_t end = 0;
  double gain = 1;
  std::vector<double> formant_offset;  // multiplicative, one per formant
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::string name_of(char prefix, int i) {
  std::ostringstream os;
  os << prefix << '_' << std::setw(3) << std::setfill('0') << i << ".wav";
  return os.str();
}

}  // namespace

VoiceParams SynthSpec::default_voice_b() {
  VoiceParams v;
  v.f0_scale = 2.0;
  v.formant_shift = 1.15;
  return v;
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::kConfig, m); };
  if (n_utterances < 1 || n_eval < 0) fail("utterance counts must be positive");
  if (!(min_duration_s > 0) || !(max_duration_s >= min_duration_s)) fail("durations must satisfy 0 < min <= max");
  if (sample_rate_hz < 8000) fail("sample rate must be at least 8 kHz");
  if (!(noise_floor >= 0) || !(peak > 0) || !(peak <= 1)) fail("noise floor must be >= 0 and peak in (0, 1]");
  const double nyquist = sample_rate_hz / 2.0;
  for (const VoiceParams* v : {&voice_a, &voice_b}) {
    if (!(v->f0_min_hz > 0) || !(v->f0_max_hz >= v->f0_min_hz) || !(v->f0_scale > 0))
      fail("f0 range and scale must be positive");
    if (!(v->max_harmonic_hz < nyquist)) fail("max_harmonic_hz must be below Nyquist");
    if (!(v->f0_max_hz * v->f0_scale * 1.25 < v->max_harmonic_hz))
      fail("f0 contour must stay below max_harmonic_hz");
    if (v->formants_hz.empty() || !(v->formant_bandwidth_hz > 0) || !(v->formant_shift > 0))
      fail("formants, bandwidth and shift must be positive");
    for (double f : v->formants_hz)
      if (!(f > 0) || !(f * v->formant_shift * 1.1 < nyquist)) fail("formants must lie below Nyquist");
  }
  const bool same = voice_a.f0_min_hz == voice_b.f0_min_hz && voice_a.f0_max_hz == voice_b.f0_max_hz &&
                    voice_a.f0_scale == voice_b.f0_scale && voice_a.formants_hz == voice_b.formants_hz &&
                    voice_a.formant_shift == voice_b.formant_shift && voice_a.tilt == voice_b.tilt &&
                    voice_a.formant_bandwidth_hz == voice_b.formant_bandwidth_hz;
  if (same) fail("the two voices must differ in at least one parameter");
}

SynthUtterance render_utterance(const SynthSpec& spec, const VoiceParams& voice, std::uint64_t sentence_seed) {
  Rng rng(sentence_seed);
  const int sr = spec.sample_rate_hz;
  const double duration = uniform(rng, spec.min_duration_s, spec.max_duration_s);
  const auto n = static_cast<std::size_t>(std::llround(duration * sr));

  // Sentence content, independent of the voice.
  const double base_unit = uniform01(rng);
  const double depth = uniform(rng, 0.03, 0.08);
  const double rate = uniform(rng, 0.5, 2.0);
  const double phase0 = uniform(rng, 0, 2 * kPi);
  const double slope = uniform(rng, -0.15, 0.15);
  std::vector<Syllable> syllables;
  for (std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.02, 0.1) * sr); pos < n;) {
    Syllable s;
    s.begin = pos;
    s.end = std::min(n, pos + static_cast<std::size_t>(uniform(rng, 0.12, 0.35) * sr));
    s.gain = uniform(rng, 0.5, 1.0);
    for (std::size_t f = 0; f < voice.formants_hz.size(); ++f) s.formant_offset.push_back(uniform(rng, 0.85, 1.15));
    syllables.push_back(std::move(s));
    pos = syllables.back().end + static_cast<std::size_t>(uniform(rng, 0.03, 0.12) * sr);
  }

  const double base = (voice.f0_min_hz + base_unit * (voice.f0_max_hz - voice.f0_min_hz)) * voice.f0_scale;
  auto f0_at = [&](std::size_t i) {
    const double t = static_cast<double>(i) / sr;
    return base * (1 + depth * std::sin(2 * kPi * rate * t + phase0)) * (1 + slope * (t / duration - 0.5));
  };

  SynthUtterance u;
  u.sentence_seed = sentence_seed;
  u.duration_s = static_cast<double>(n) / sr;
  u.wav.sample_rate_hz = sr;
  u.wav.samples.assign(n, 0.0f);
  std::vector<double> x(n, 0.0);
  const int max_h = static_cast<int>(voice.max_harmonic_hz / (base * (1 - depth) * 0.85)) + 1;
  std::vector<double> phase(static_cast<std::size_t>(max_h) + 1, 0.0), amp(static_cast<std::size_t>(max_h) + 1, 0.0);
  const double attack = 0.02 * sr;
  double f0_sum = 0, f0_lo = 1e300, f0_hi = 0;
  std::size_t syl = 0;
  for (std::size_t b0 = 0; b0 < n; b0 += kBlock) {
    const std::size_t b1 = std::min(n, b0 + kBlock);
    const std::size_t mid = (b0 + b1) / 2;
    while (syl < syllables.size() && syllables[syl].end <= mid) ++syl;
    const bool voiced = syl < syllables.size() && syllables[syl].begin <= mid;
    const double f0_mid = f0_at(mid);
    for (int h = 1; h <= max_h; ++h) {
      const double fh = h * f0_mid;
      double a = 0;
      if (voiced && fh < voice.max_harmonic_hz) {
        double env = 0.3;
        for (std::size_t f = 0; f < voice.formants_hz.size(); ++f) {
          const double center = voice.formants_hz[f] * voice.formant_shift * syllables[syl].formant_offset[f];
          const double z = (fh - center) / voice.formant_bandwidth_hz;
          env += std::exp(-0.5 * z * z);
        }
        a = env * std::pow(h, -voice.tilt);
      }
      amp[static_cast<std::size_t>(h)] = a;
    }
    for (std::size_t i = b0; i < b1; ++i) {
      const double f0 = f0_at(i);
      f0_sum += f0;
      f0_lo = std::min(f0_lo, f0);
      f0_hi = std::max(f0_hi, f0);
      double env = 0;
      if (voiced) {
        const auto& s = syllables[syl];
        const double from_start = static_cast<double>(i) - static_cast<double>(s.begin);
        const double to_end = static_cast<double>(s.end) - static_cast<double>(i);
        const double ramp = std::clamp(std::min(from_start, to_end) / attack, 0.0, 1.0);
        env = s.gain * (0.5 - 0.5 * std::cos(kPi * ramp));
      }
      double v = 0;
      for (int h = 1; h <= max_h; ++h) {
        auto& ph = phase[static_cast<std::size_t>(h)];
        ph += 2 * kPi * h * f0 / sr;
        if (ph > 2 * kPi) ph -= 2 * kPi * std::floor(ph / (2 * kPi));
        const double a = amp[static_cast<std::size_t>(h)];
        if (a > 0) v += a * std::sin(ph);
      }
      x[i] = env * v;
    }
  }
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0 ? spec.peak / peak : 0.0;
  Rng noise(derive_seed(sentence_seed, kStreamNoise, 0));
  for (std::size_t i = 0; i < n; ++i)
    u.wav.samples[i] = static_cast<float>(std::clamp(x[i] * gain + spec.noise_floor * normal01(noise), -1.0, 1.0));
  u.f0_mean_hz = f0_sum / static_cast<double>(n);
  u.f0_min_hz = f0_lo;
  u.f0_max_hz = f0_hi;
  return u;
}

std::vector<SynthUtterance> generate_corpus(const SynthSpec& spec) {
  spec.validate();
  std::vector<SynthUtterance> out;
  auto add = [&](const VoiceParams& voice, std::uint64_t seed, const char* domain, const char* split,
                 const std::string& name) {
    SynthUtterance u = render_utterance(spec, voice, seed);
    u.domain = domain;
    u.split = split;
    u.file = std::string(split) + "/" + domain + "/" + name;
    out.push_back(std::move(u));
  };
  for (int i = 0; i < spec.n_utterances; ++i)
    add(spec.voice_a, derive_seed(spec.seed, kStreamA, static_cast<std::uint64_t>(i)), "A", "train", name_of('a', i));
  for (int i = 0; i < spec.n_utterances; ++i)
    add(spec.voice_b, derive_seed(spec.seed, kStreamB, static_cast<std::uint64_t>(i)), "B", "train", name_of('b', i));
  for (const auto& [voice, domain] : {std::pair{&spec.voice_a, "A"}, std::pair{&spec.voice_b, "B"}})
    for (int i = 0; i < spec.n_eval; ++i)
      add(*voice, derive_seed(spec.seed, kStreamEval, static_cast<std::uint64_t>(i)), domain, "eval", name_of('e', i));
  return out;
}

std::vector<SynthUtterance> write_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  auto corpus = generate_corpus(spec);
  std::ostringstream manifest;
  manifest << "file,domain,split,sentence_seed,f0_mean_hz,f0_min_hz,f0_max_hz,duration_s\n"
           << std::setprecision(10);
  for (auto& u : corpus) {
    const auto path = out_dir / u.file;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create " + path.parent_path().string() + ": " + ec.message());
    save_waveform(path, u.wav);
    manifest << u.file << ',' << u.domain << ',' << u.split << ',' << u.sentence_seed << ',' << u.f0_mean_hz
             << ',' << u.f0_min_hz << ',' << u.f0_max_hz << ',' << u.duration_s << '\n';
    u.wav.samples.clear();
  }
  std::ofstream out(out_dir / "manifest.csv", std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + (out_dir / "manifest.csv").string());
  out << manifest.str();
  if (!out) throw Error(ErrorKind::kIo, "short write to manifest");
  return corpus;
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "file,domain,split,sentence_seed,f0_mean_hz,f0_min_hz,f0_max_hz,duration_s")
    throw Error(ErrorKind::kFormat, path.string() + ": unexpected manifest header");
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 8) throw Error(ErrorKind::kFormat, path.string() + ": malformed row: " + line);
    try {
      rows.push_back({f[0], f[1], f[2], std::stoull(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6]),
                      std::stod(f[7])});
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kFormat, path.string() + ": malformed row: " + line);
    }
  }
  return rows;
}

}  // namespace maskvc
