#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "maskvc/error.hpp"
#include "maskvc/features.hpp"
#include "maskvc/synth_corpus.hpp"
#include "support/tmpdir.hpp"

using namespace maskvc;
namespace fs = std::filesystem;

namespace {

// Pitch of the loudest 2048-sample window by normalized autocorrelation:
// the shortest lag within 90% of the best peak avoids octave-down errors.
double autocorr_pitch(const Waveform& w) {
  const std::size_t win = 2048;
  const auto& s = w.samples;
  REQUIRE(s.size() > win);
  std::size_t best_start = 0;
  double best_energy = -1;
  for (std::size_t start = 0; start + win <= s.size(); start += 512) {
    double e = 0;
    for (std::size_t i = start; i < start + win; ++i) e += double(s[i]) * s[i];
    if (e > best_energy) best_energy = e, best_start = start;
  }
  const int lo = w.sample_rate_hz / 500, hi = w.sample_rate_hz / 60;
  std::vector<double> r(static_cast<std::size_t>(hi) + 1, 0.0);
  double peak = 0;
  for (int lag = lo; lag <= hi; ++lag) {
    double acc = 0, e0 = 0, e1 = 0;
    for (std::size_t i = best_start; i + lag < best_start + win; ++i) {
      acc += double(s[i]) * s[i + lag];
      e0 += double(s[i]) * s[i];
      e1 += double(s[i + lag]) * s[i + lag];
    }
    r[static_cast<std::size_t>(lag)] = acc / std::sqrt(e0 * e1 + 1e-30);
    peak = std::max(peak, r[static_cast<std::size_t>(lag)]);
  }
  for (int lag = lo + 1; lag < hi; ++lag) {
    const double v = r[static_cast<std::size_t>(lag)];
    if (v >= 0.9 * peak && v >= r[static_cast<std::size_t>(lag) - 1] && v >= r[static_cast<std::size_t>(lag) + 1]) {
      // Parabolic refinement around the integer lag.
      const double a = r[static_cast<std::size_t>(lag) - 1], c = r[static_cast<std::size_t>(lag) + 1];
      const double denom = a - 2 * v + c;
      const double off = denom != 0 ? 0.5 * (a - c) / denom : 0.0;
      return w.sample_rate_hz / (lag + off);
    }
  }
  return 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec spec;
  spec.n_utterances = 10;
  spec.n_eval = 4;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("corpus layout and manifest") {
  testing::TempDir dir("synth");
  auto spec = small_spec(3);
  spec.n_eval = 0;
  const auto rows = write_corpus(spec, dir.path());
  REQUIRE(rows.size() == 20);
  int wavs = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path()))
    if (e.path().extension() == ".wav") ++wavs;
  CHECK(wavs == 20);
  const auto manifest = read_manifest(dir.path() / "manifest.csv");
  REQUIRE(manifest.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(manifest[i].file == rows[i].file);
    CHECK(manifest[i].domain == (i < 10 ? "A" : "B"));
    CHECK(manifest[i].split == "train");
    CHECK(manifest[i].sentence_seed == rows[i].sentence_seed);
    CHECK(manifest[i].f0_mean_hz == doctest::Approx(rows[i].f0_mean_hz).epsilon(1e-5));
    CHECK(manifest[i].duration_s >= spec.min_duration_s);
    CHECK(manifest[i].duration_s <= spec.max_duration_s + 1e-9);
    const auto wav = load_waveform(dir.path() / manifest[i].file);
    CHECK(wav.sample_rate_hz == 22050);
    CHECK(wav.samples.size() == static_cast<std::size_t>(std::lround(manifest[i].duration_s * 22050)));
    float peak = 0;
    for (float v : wav.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 0.52f);
    CHECK(peak >= 0.45f);
  }
  CHECK(rows[0].file == "train/A/a_000.wav");
  CHECK(rows[10].file == "train/B/b_000.wav");
  CHECK_THROWS_AS(read_manifest(dir.path() / "missing.csv"), Error);
  std::ofstream(dir.path() / "bad.csv") << "file,domain\n";
  CHECK_THROWS_AS(read_manifest(dir.path() / "bad.csv"), Error);
}

TEST_CASE("same seed, same bytes; training sentences are disjoint") {
  testing::TempDir dir("synth");
  const auto spec = small_spec(11);
  const auto a = write_corpus(spec, dir.path() / "a");
  const auto b = write_corpus(spec, dir.path() / "b");
  REQUIRE(a.size() == b.size());
  for (const auto& row : a) CHECK(slurp(dir.path() / "a" / row.file) == slurp(dir.path() / "b" / row.file));
  CHECK(slurp(dir.path() / "a" / "manifest.csv") == slurp(dir.path() / "b" / "manifest.csv"));

  std::set<std::uint64_t> seeds_a, seeds_b, seeds_eval;
  for (const auto& row : a) {
    if (row.split == "eval") seeds_eval.insert(row.sentence_seed);
    else (row.domain == "A" ? seeds_a : seeds_b).insert(row.sentence_seed);
  }
  CHECK(seeds_a.size() == 10);
  CHECK(seeds_b.size() == 10);
  CHECK(seeds_eval.size() == 4);  // shared by both renderings of a pair
  for (auto s : seeds_a) {
    CHECK(seeds_b.count(s) == 0);
    CHECK(seeds_eval.count(s) == 0);
  }
  for (auto s : seeds_b) CHECK(seeds_eval.count(s) == 0);

  const auto other = generate_corpus(small_spec(12));
  CHECK(other[0].sentence_seed != a[0].sentence_seed);
}

TEST_CASE("voice B sits an octave above voice A") {
  const auto spec = small_spec(5);
  const auto corpus = generate_corpus(spec);
  std::vector<const SynthUtterance*> eval_a, eval_b;
  for (const auto& u : corpus) {
    if (u.split != "eval") continue;
    (u.domain == "A" ? eval_a : eval_b).push_back(&u);
  }
  REQUIRE(eval_a.size() == 4);
  REQUIRE(eval_b.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(eval_a[i]->file.substr(eval_a[i]->file.size() - 9) == eval_b[i]->file.substr(eval_b[i]->file.size() - 9));
    CHECK(eval_a[i]->sentence_seed == eval_b[i]->sentence_seed);
    CHECK(eval_a[i]->wav.samples.size() == eval_b[i]->wav.samples.size());
    const double fa = autocorr_pitch(eval_a[i]->wav);
    const double fb = autocorr_pitch(eval_b[i]->wav);
    INFO("pair " << i << ": " << fa << " Hz vs " << fb << " Hz");
    CHECK(fb / fa == doctest::Approx(2.0).epsilon(0.05));
    CHECK(eval_b[i]->f0_mean_hz == doctest::Approx(2 * eval_a[i]->f0_mean_hz).epsilon(1e-9));
  }
  for (const auto& u : corpus) {
    const double f = autocorr_pitch(u.wav);
    INFO(u.file << ": " << f << " Hz, manifest " << u.f0_min_hz << ".." << u.f0_max_hz);
    CHECK(f >= 0.97 * u.f0_min_hz);
    CHECK(f <= 1.03 * u.f0_max_hz);
    const double lo = u.domain == "A" ? spec.voice_a.f0_min_hz : 2 * spec.voice_a.f0_min_hz;
    const double hi = u.domain == "A" ? spec.voice_a.f0_max_hz : 2 * spec.voice_a.f0_max_hz;
    CHECK(u.f0_mean_hz >= 0.8 * lo);
    CHECK(u.f0_mean_hz <= 1.2 * hi);
  }
}

TEST_CASE("spec validation") {
  auto expect_config = [](const SynthSpec& s) {
    try {
      s.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::kConfig;
    }
    return false;
  };
  SynthSpec ok;
  CHECK_NOTHROW(ok.validate());
  auto s = ok;
  s.n_utterances = 0;
  CHECK(expect_config(s));
  s = ok;
  s.min_duration_s = 3;
  CHECK(expect_config(s));
  s = ok;
  s.voice_b = s.voice_a;
  CHECK(expect_config(s));
  s = ok;
  s.voice_b.max_harmonic_hz = 20000;
  CHECK(expect_config(s));
  s = ok;
  s.voice_a.f0_min_hz = -1;
  CHECK(expect_config(s));
  CHECK_THROWS_AS(generate_corpus(s), Error);
}
