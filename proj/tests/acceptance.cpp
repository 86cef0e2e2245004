// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 4 8      run a subset
//
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "maskvc/checkpoint.hpp"
#include "maskvc/error.hpp"
#include "maskvc/evaluation.hpp"
#include "maskvc/features.hpp"
#include "maskvc/mask.hpp"
#include "maskvc/models.hpp"
#include "maskvc/objectives.hpp"
#include "maskvc/runtime.hpp"
#include "maskvc/synth_corpus.hpp"
#include "maskvc/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/tmpdir.hpp"

using namespace maskvc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failed expectations; the first few are reported.
class Verdict {
 public:
  bool expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) {
      ++failures_;
      if (notes_.size() < 4) notes_.push_back(what);
    }
    return ok;
  }
  void note(const std::string& s) { info_.push_back(s); }
  bool passed() const { return failures_ == 0; }
  std::string summary() const {
    std::ostringstream os;
    os << checks_ - failures_ << "/" << checks_ << " checks";
    for (const auto& s : info_) os << "; " << s;
    for (const auto& s : notes_) os << "; FAILED: " << s;
    return os.str();
  }

 private:
  long checks_ = 0, failures_ = 0;
  std::vector<std::string> notes_, info_;
};

std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

template <typename V>
std::span<const float> cs(const V& v) {
  return {v.data(), v.size()};
}

std::vector<float> random_grid(Rng& rng, std::size_t n, double scale) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(scale * (2.0 * uniform01(rng) - 1.0));
  return v;
}

// ---- 1: loss oracles ----------------------------------------------------------

void criterion_loss_oracles(Verdict& v) {
  auto ld = [](const std::vector<float>& a) {
    return std::vector<long double>(a.begin(), a.end());
  };
  auto mean_sq_off = [](const std::vector<long double>& a, long double c) {
    long double s = 0;
    for (auto x : a) s += (x - c) * (x - c);
    return static_cast<double>(s / a.size());
  };
  auto mean_abs_diff = [](const std::vector<long double>& a, const std::vector<long double>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return static_cast<double>(s / a.size());
  };
  Rng rng(20240101);
  double worst = 0;
  auto within = [&](double got, double want, const char* op) {
    worst = std::max(worst, std::abs(got - want));
    v.expect(std::abs(got - want) <= 1e-6, std::string(op) + " off by " + num(std::abs(got - want)));
  };
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 2000));
    const auto k = static_cast<std::size_t>(uniform_int(rng, 1, 2000));
    const auto real = random_grid(rng, n, 3.0), fake = random_grid(rng, k, 3.0);
    const auto R = ld(real), F = ld(fake);
    within(lsgan_d_loss<float>(cs(real), cs(fake)), mean_sq_off(R, 1) + mean_sq_off(F, 0), "lsgan_d_loss");
    within(lsgan_g_loss<float>(cs(fake)), mean_sq_off(F, 1), "lsgan_g_loss");
    const auto [d2, g2] = second_adv_losses<float>(cs(real), cs(fake));
    within(d2, mean_sq_off(R, 1) + mean_sq_off(F, 0), "second_adv_losses (D)");
    within(g2, mean_sq_off(F, 1), "second_adv_losses (G)");
    const auto a = random_grid(rng, n, 5.0), b = random_grid(rng, n, 5.0);
    within(masked_cycle_loss<float>(cs(a), cs(b)), mean_abs_diff(ld(a), ld(b)), "masked_cycle_loss");
    within(identity_loss<float>(cs(a), cs(b)), mean_abs_diff(ld(a), ld(b)), "identity_loss");

    LossBreakdown t;
    double* fields[] = {&t.adv_xy, &t.adv_yx, &t.cyc_xyx, &t.cyc_yxy, &t.id_xy, &t.id_yx, &t.adv2_xyx, &t.adv2_yxy};
    for (double* f : fields) *f = 4.0 * uniform01(rng);
    const DiscriminatorLosses d{uniform01(rng), uniform01(rng), uniform01(rng), uniform01(rng)};
    LossWeights w;
    const std::int64_t it = uniform_int(rng, 0, 20'000);
    const long double id = it < 10'000 ? 5.0L * (t.id_xy + t.id_yx) : 0.0L;
    const long double g = (long double)t.adv_xy + t.adv_yx + 10.0L * t.cyc_xyx + 10.0L * t.cyc_yxy + id +
                          t.adv2_xyx + t.adv2_yxy;
    const auto tot = full_objective(t, d, w, it);
    within(tot.g_total, static_cast<double>(g), "full_objective (G)");
    within(tot.d_total, static_cast<double>((long double)d.d_x + d.d_y + d.d2_x + d.d2_y), "full_objective (D)");
  }
  v.note("worst deviation " + num(worst, 3));

  // Closed forms, exact.
  const std::vector<float> ones(64, 1.0f), zeros(64, 0.0f), threes(64, 3.0f), fours(64, 4.0f), negs(64, -1.0f);
  v.expect(lsgan_d_loss<float>(cs(ones), cs(zeros)) == 0.0, "D loss at optimum");
  v.expect(lsgan_d_loss<float>(cs(zeros), cs(ones)) == 2.0, "D loss fully fooled");
  v.expect(lsgan_g_loss<float>(cs(ones)) == 0.0, "G loss at optimum");
  v.expect(lsgan_g_loss<float>(cs(zeros)) == 1.0, "G loss rejected");
  v.expect(second_adv_losses<float>(cs(ones), cs(zeros)) == std::pair<double, double>{0.0, 1.0}, "second adv optimum");
  v.expect(masked_cycle_loss<float>(cs(threes), cs(threes)) == 0.0, "cycle loss of equal inputs");
  v.expect(masked_cycle_loss<float>(cs(threes), cs(fours)) == 1.0, "cycle loss unit offset");
  v.expect(identity_loss<float>(cs(negs), cs(ones)) == 2.0, "identity loss offset 2");
  LossBreakdown idonly;
  idonly.id_xy = 1.0;
  idonly.id_yx = 2.0;
  v.expect(full_objective(idonly, {}, LossWeights{}, 9'999).g_total == 15.0, "identity weight before cutoff");
  v.expect(full_objective(idonly, {}, LossWeights{}, 10'000).g_total == 0.0, "identity cutoff at 10k");
  v.expect(full_objective(LossBreakdown{}, DiscriminatorLosses{}, LossWeights{}, 0).g_total == 0.0, "zero terms");
}

// ---- 2: gradient check --------------------------------------------------------

void criterion_gradient(Verdict& v) {
  auto p = testing::make_gradcheck_problem(1);
  const auto r = testing::check_total_g_gradient(p, 1e-4, 1e-6);
  v.expect(r.params == p.nets.g_xy.params.size() + p.nets.g_yx.params.size(), "parameter sweep incomplete");
  v.note("h=1e-4 over " + std::to_string(r.params) + " params: max rel err " + num(r.max_rel_error, 3) +
         " (analytic " + num(r.worst_analytic) + ", numeric " + num(r.worst_numeric) + ")");
  v.expect(r.max_rel_error < 1e-3, "max rel err " + num(r.max_rel_error, 3) + " >= 1e-3 at h=1e-4");
  auto q = testing::make_gradcheck_problem(1);
  const auto r5 = testing::check_total_g_gradient(q, 1e-5, 1e-6);
  v.note("diagnostic h=1e-5: max rel err " + num(r5.max_rel_error, 3));
}

// ---- 3: mask laws -------------------------------------------------------------

std::vector<int> zero_frames(const Mask& m) {
  std::vector<int> z;
  for (int t = 0; t < m.frames; ++t) {
    bool all = true;
    for (int b = 0; b < m.bins; ++b) all = all && m.at(b, t) == 0.0f;
    if (all) z.push_back(t);
  }
  return z;
}

std::vector<int> zero_bins(const Mask& m) {
  std::vector<int> z;
  for (int b = 0; b < m.bins; ++b) {
    bool all = true;
    for (int t = 0; t < m.frames; ++t) all = all && m.at(b, t) == 0.0f;
    if (all) z.push_back(b);
  }
  return z;
}

bool contiguous(const std::vector<int>& z) {
  for (std::size_t i = 1; i < z.size(); ++i)
    if (z[i] != z[i - 1] + 1) return false;
  return true;
}

void criterion_mask_laws(Verdict& v) {
  const int draws = 1000;
  Rng rng(31337);
  for (const char* label : {"FIF 0-50", "FIF 25", "FIF_NS 0-50", "FIF_NS 25", "FIS 0-50", "FIS 25", "FIP 0-50",
                            "FIP 25"}) {
    const auto policy = MaskPolicy::parse(label);
    bool ok_binary = true, ok_size = true, ok_shape = true, ok_det = true;
    for (int i = 0; i < draws; ++i) {
      const int F = static_cast<int>(uniform_int(rng, 1, 80));
      const int T = static_cast<int>(uniform_int(rng, 1, 128));
      const std::uint64_t seed = rng();
      const Mask m = sample_mask(policy, F, T, seed);
      const Mask again = sample_mask(policy, F, T, seed);
      ok_det = ok_det && again.values == m.values && again.size_percent == m.size_percent;
      ok_binary = ok_binary && m.bins == F && m.frames == T && m.values.size() == static_cast<std::size_t>(F) * T &&
                  std::all_of(m.values.begin(), m.values.end(), [](float x) { return x == 0.0f || x == 1.0f; });
      ok_size = ok_size && m.size_percent >= 0 && m.size_percent <= policy.x_percent &&
                (policy.size_mode == SizeMode::kUniform || m.size_percent == policy.x_percent);
      const int kt = static_cast<int>(std::floor(T * m.size_percent / 100 + 0.5));
      const int kf = static_cast<int>(std::floor(F * m.size_percent / 100 + 0.5));
      switch (policy.family) {
        case MaskFamily::kFif: {
          const auto z = zero_frames(m);
          ok_shape = ok_shape && static_cast<int>(z.size()) == kt && contiguous(z) &&
                     m.zero_count() == static_cast<std::size_t>(kt) * F;
          break;
        }
        case MaskFamily::kFifNs: {
          const auto z = zero_frames(m);
          ok_shape = ok_shape && static_cast<int>(z.size()) == kt && m.zero_count() == static_cast<std::size_t>(kt) * F;
          break;
        }
        case MaskFamily::kFis: {
          const auto z = zero_bins(m);
          ok_shape = ok_shape && static_cast<int>(z.size()) == kf && contiguous(z) &&
                     m.zero_count() == static_cast<std::size_t>(kf) * T;
          break;
        }
        case MaskFamily::kFip:
          ok_shape = ok_shape && m.zero_count() == static_cast<std::size_t>(m.zero_extent);
          break;
      }
    }
    v.expect(ok_binary, std::string(label) + " binary/shape");
    v.expect(ok_size, std::string(label) + " realized size range");
    v.expect(ok_shape, std::string(label) + " size law / contiguity");
    v.expect(ok_det, std::string(label) + " determinism");
  }
  // FIP cell counts: mean fraction of zeros for constant 25% over many cells.
  {
    std::size_t zeros = 0, cells = 0;
    for (int i = 0; i < draws; ++i) {
      const Mask m = sample_mask(MaskPolicy::parse("FIP 25"), 80, 64, rng);
      zeros += m.zero_count();
      cells += m.values.size();
    }
    const double frac = static_cast<double>(zeros) / static_cast<double>(cells);
    // Binomial: sd of the pooled fraction is sqrt(.25 * .75 / 5.12e6) ~ 1.9e-4.
    v.expect(std::abs(frac - 0.25) < 1.5e-3, "FIP 25 zero fraction " + num(frac));
  }
  bool ok_fif0 = true;
  for (int i = 0; i < draws; ++i) {
    const int F = static_cast<int>(uniform_int(rng, 1, 80));
    const int T = static_cast<int>(uniform_int(rng, 1, 128));
    ok_fif0 = ok_fif0 && sample_mask(MaskPolicy::parse("FIF 0"), F, T, rng).values == all_ones_mask(F, T).values;
  }
  v.expect(ok_fif0, "FIF 0 differs from the all-ones mask");
  v.note(std::to_string(draws) + " draws per family and size mode");
}

// ---- 4: equivalence reductions -----------------------------------------------

MelSpectrogram smooth_mel(int bins, int frames, Rng& rng) {
  MelSpectrogram m(bins, frames);
  for (int b = 0; b < bins; ++b) {
    double level = normal01(rng);
    for (int t = 0; t < frames; ++t) {
      level = 0.9 * level + 0.3 * normal01(rng);
      m.at(b, t) = static_cast<float>(level);
    }
  }
  m.normalized = true;
  return m;
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

MaskedMel unmasked(const MelSpectrogram& x, const Mask& m) {
  MaskedMel out;
  out.bins = x.bins;
  out.frames = x.frames;
  out.values = x.values;
  out.source_mask = m;
  return out;
}

void criterion_equivalences(Verdict& v) {
  TrainConfig cfg;
  cfg.preset = Preset::kDesk;
  cfg.seed = 5;
  const auto nets = make_networks<float>(cfg);
  Rng rng(44);
  const int F = cfg.mel_bins, T = cfg.crop_frames;

  // Masked cycle objective under an all-ones mask equals the plain cycle
  // objective G_yx(G_xy(x)) computed without any masking.
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = smooth_mel(F, T, rng), y = smooth_mel(F, T, rng);
    const Mask ones = all_ones_mask(F, T);
    v.expect(bit_equal(apply_mask(x, ones).values, x.values), "x * 1 differs from x");
    StepBatch<float> batch{x.values, y.values, F, T, ones, ones};
    const auto pass = forward_generators(nets, batch, true);
    const auto losses = generator_losses<float>(nets, batch, pass, cfg.weights, 0, nullptr, nullptr);
    const auto y_fake = converter_forward(nets.g_xy, unmasked(x, ones), ones);
    const auto x_back = converter_forward(nets.g_yx, unmasked(y_fake, ones), ones);
    const auto x_fake = converter_forward(nets.g_yx, unmasked(y, ones), ones);
    const auto y_back = converter_forward(nets.g_xy, unmasked(x_fake, ones), ones);
    v.expect(losses.cyc_xyx == masked_cycle_loss<float>(x.values, x_back.values), "X cycle term differs");
    v.expect(losses.cyc_yxy == masked_cycle_loss<float>(y.values, y_back.values), "Y cycle term differs");
  }

  // Zeroed mask-channel weights: the output ignores the mask channel.
  auto zeroed = nets.g_xy;
  zero_mask_channel(zeroed);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = smooth_mel(F, T, rng);
    const Mask m = sample_mask(MaskPolicy::parse(trial % 2 ? "FIF 0-50" : "FIP 0-50"), F, T, rng);
    const auto a = converter_forward(zeroed, unmasked(x, m), m);
    const auto b = converter_forward(zeroed, unmasked(x, all_ones_mask(F, T)), all_ones_mask(F, T));
    v.expect(bit_equal(a.values, b.values), "zeroed converter depends on the mask");
  }

  // Single-input (V2) inference equals mask-mode inference with that zeroing.
  StftConfig stft;
  NormStats sx{std::vector<double>(F, -5.0), std::vector<double>(F, 2.0), "x"};
  NormStats sy{std::vector<double>(F, -3.0), std::vector<double>(F, 1.5), "y"};
  Checkpoint mask_mode{cfg, make_train_state(cfg), sx, sy, stft};
  zero_mask_channel(mask_mode.state.nets.g_xy);
  TrainConfig v2cfg = cfg;
  v2cfg.mask_input = false;
  Checkpoint v2{v2cfg, make_train_state(v2cfg), sx, sy, stft};
  v2.state.nets.g_xy = drop_mask_channel(mask_mode.state.nets.g_xy);
  for (int frames : {64, 87, 150}) {
    const auto x = smooth_mel(F, frames, rng);
    v.expect(bit_equal(convert(mask_mode, x, Direction::kXY).values, convert(v2, x, Direction::kXY).values),
             "V2 inference differs at T=" + std::to_string(frames));
  }
}

// ---- 5: parameter budget ------------------------------------------------------

void criterion_params(Verdict& v) {
  const auto g = make_converter<float>(ConverterSpec::for_preset(Preset::kFull, 80, 2), 0);
  const std::size_t n = count_params(g);
  v.note("full converter " + std::to_string(n) + " params");
  v.expect(n >= 14'400'000 && n <= 17'600'000, "count outside [14.4M, 17.6M]");
}

// ---- 6, 7: training on the synthetic corpus ----------------------------------

struct Corpus {
  std::vector<MelSpectrogram> train_a, train_b, eval_a, eval_b;
  NormStats stats_a, stats_b;
  StftConfig stft;
};

Corpus synth_features(int n_train, int n_eval, std::uint64_t seed) {
  SynthSpec spec;
  spec.n_utterances = n_train;
  spec.n_eval = n_eval;
  spec.seed = seed;
  Corpus c;
  for (const auto& u : generate_corpus(spec)) {
    auto mel = mel_spectrogram(u.wav, c.stft);
    mel.domain = u.domain == "A" ? "X" : "Y";
    auto& dst = u.split == "train" ? (u.domain == "A" ? c.train_a : c.train_b) : (u.domain == "A" ? c.eval_a : c.eval_b);
    dst.push_back(std::move(mel));
  }
  c.stats_a = compute_norm_stats(c.train_a, "synth-A");
  c.stats_b = compute_norm_stats(c.train_b, "synth-B");
  auto norm = [](std::vector<MelSpectrogram>& set, const NormStats& s) {
    for (auto& m : set) m = normalize(m, s);
  };
  norm(c.train_a, c.stats_a);
  norm(c.eval_a, c.stats_a);
  norm(c.train_b, c.stats_b);
  norm(c.eval_b, c.stats_b);
  return c;
}

double tail_mean(const std::vector<double>& xs, std::size_t n) {
  const std::size_t k = std::min(n, xs.size());
  double s = 0;
  for (std::size_t i = xs.size() - k; i < xs.size(); ++i) s += xs[i];
  return s / static_cast<double>(k);
}

void criterion_self_mapping(Verdict& v) {
  const auto t0 = Clock::now();
  const Corpus c = synth_features(20, 1, 606);
  TrainConfig cfg;
  cfg.preset = Preset::kDesk;
  cfg.iterations = 2000;
  cfg.checkpoint_every = 1000;
  cfg.seed = 6;
  testing::TempDir dir("accept6");
  TrainingRun run;
  run.out_dir = dir.path();
  run.quiet = true;
  run.stats_x = run.stats_y = c.stats_a;
  run.stft = c.stft;
  std::map<std::string, std::vector<double>> series;
  run.on_step = [&](const TrainingRecord& r) {
    series["id_xy"].push_back(r.losses.id_xy);
    series["id_yx"].push_back(r.losses.id_yx);
    series["cyc_xyx"].push_back(r.losses.cyc_xyx);
    series["cyc_yxy"].push_back(r.losses.cyc_yxy);
  };
  run_training(cfg, c.train_a, c.train_a, run);
  const double elapsed = seconds_since(t0);
  for (const auto& [term, xs] : series) {
    if (!v.expect(xs.size() == 2000, term + " series length")) continue;
    const double start = xs[10], end = tail_mean(xs, 20);
    v.note(term + " " + num(start, 4) + " -> " + num(end, 4) + " (" + num(100 * end / start, 3) + "%)");
    v.expect(end < 0.2 * start, term + " did not fall below 20% of its iteration-10 value");
  }
  v.note("train " + num(elapsed, 4) + " s");
  v.expect(elapsed <= 15 * 60, "runtime over 15 min");
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void criterion_fif_ordering(Verdict& v) {
  const auto t0 = Clock::now();
  const Corpus c = synth_features(20, 5, 707);
  const MaskPolicy probe = MaskPolicy::parse("FIF 25");
  const std::uint64_t probe_seed = 9001;
  std::map<std::string, std::vector<double>> scores;
  for (const char* variant : {"FIF 0", "FIF 0-50"}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      TrainConfig cfg;
      cfg.preset = Preset::kDesk;
      cfg.iterations = 5000;
      cfg.checkpoint_every = 5000;
      cfg.mask_policy = MaskPolicy::parse(variant);
      cfg.seed = seed;
      testing::TempDir dir("accept7");
      TrainingRun run;
      run.out_dir = dir.path();
      run.quiet = true;
      run.stats_x = c.stats_a;
      run.stats_y = c.stats_b;
      run.stft = c.stft;
      const auto ck = load_checkpoint(run_training(cfg, c.train_a, c.train_b, run));
      const auto& n = ck.state.nets;
      const double lx = masked_reconstruction_l1(n.g_xy, n.g_yx, c.eval_a, cfg.crop_frames, probe, probe_seed);
      const double ly = masked_reconstruction_l1(n.g_yx, n.g_xy, c.eval_b, cfg.crop_frames, probe, probe_seed);
      scores[variant].push_back(0.5 * (lx + ly));
      std::cout << "  [7] " << variant << " seed " << seed << ": masked-frame L1 " << num(0.5 * (lx + ly), 5)
                << " (A " << num(lx, 5) << ", B " << num(ly, 5) << ") at " << num(seconds_since(t0), 4) << " s"
                << std::endl;
    }
  }
  const double base = median(scores["FIF 0"]), fif = median(scores["FIF 0-50"]);
  const double elapsed = seconds_since(t0);
  v.note("median L1 FIF 0 = " + num(base, 5) + ", FIF 0-50 = " + num(fif, 5));
  v.expect(fif < base, "FIF 0-50 is not strictly lower");
  v.note("total " + num(elapsed, 5) + " s");
  v.expect(elapsed <= 2 * 3600, "runtime over 2 h");
}

// ---- 8: metric suite ----------------------------------------------------------

MelCepstrum random_cepstrum(int order, int frames, Rng& rng) {
  MelCepstrum mc;
  mc.order = order;
  mc.frames = frames;
  mc.values.resize(static_cast<std::size_t>(order) * frames);
  for (double& x : mc.values) x = normal01(rng);
  return mc;
}

double exhaustive_dtw(const MelCepstrum& a, const MelCepstrum& b) {
  auto dist = [&](int i, int j) {
    long double s = 0;
    for (int c = 1; c < a.order; ++c) {
      const long double d = (long double)a.at(i, c) - b.at(j, c);
      s += d * d;
    }
    return static_cast<double>(std::sqrt(s));
  };
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int, double)> walk = [&](int i, int j, double acc) {
    acc += dist(i, j);
    if (i == a.frames - 1 && j == b.frames - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < a.frames && j + 1 < b.frames) walk(i + 1, j + 1, acc);
    if (i + 1 < a.frames) walk(i + 1, j, acc);
    if (j + 1 < b.frames) walk(i, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

void criterion_metrics(Verdict& v) {
  Rng rng(808);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_cepstrum(35, static_cast<int>(uniform_int(rng, 1, 60)), rng);
    v.expect(mcd(a, a) == 0.0, "mcd(a, a) != 0");
  }
  // Coefficients on a 1/1024 grid, so adding delta is exact.
  auto a = random_cepstrum(35, 40, rng);
  for (double& x : a.values) x = std::round(x * 1024) / 1024;
  Alignment diag;
  for (int t = 0; t < 40; ++t) diag.path.emplace_back(t, t);
  for (double delta : {0.5, 0.25, 2.0}) {
    auto b = a;
    for (int t = 0; t < 40; ++t) b.values[static_cast<std::size_t>(t) * 35 + 3] += delta;
    v.expect(mcd(b, a, diag) == kMcdScale * delta, "single-coefficient MCD for delta " + num(delta) + ": got " +
                                                        num(mcd(b, a, diag), 17));
  }
  int matched = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_cepstrum(12, static_cast<int>(uniform_int(rng, 1, 7)), rng);
    const auto y = random_cepstrum(12, static_cast<int>(uniform_int(rng, 1, 7)), rng);
    const double got = dtw_align(x, y).cost, want = exhaustive_dtw(x, y);
    matched += v.expect(std::abs(got - want) <= 1e-9 * std::max(1.0, want), "DTW differs from exhaustive oracle");
  }
  v.note("DTW matched exhaustive enumeration on " + std::to_string(matched) + "/50 pairs");
}

// ---- 9: reproducibility -------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Byte comparison of two output trees; train logs compare everything but the
// wall-clock field.
bool same_tree(const fs::path& a, const fs::path& b, std::string* why) {
  std::set<fs::path> files;
  for (const auto* root : {&a, &b})
    for (const auto& e : fs::recursive_directory_iterator(*root))
      if (e.is_regular_file()) files.insert(fs::relative(e.path(), *root));
  for (const auto& rel : files) {
    if (!fs::exists(a / rel) || !fs::exists(b / rel)) {
      *why = rel.string() + " missing on one side";
      return false;
    }
    if (rel.filename() == "train_log.jsonl") {
      std::ifstream fa(a / rel), fb(b / rel);
      std::string la, lb;
      while (true) {
        const bool ga = static_cast<bool>(std::getline(fa, la)), gb = static_cast<bool>(std::getline(fb, lb));
        if (ga != gb) {
          *why = rel.string() + " lengths differ";
          return false;
        }
        if (!ga) break;
        auto ra = parse_training_record(la), rb = parse_training_record(lb);
        if (!(ra.losses == rb.losses) || ra.iteration != rb.iteration || ra.mask_start != rb.mask_start ||
            ra.mask_extent != rb.mask_extent) {
          *why = rel.string() + " differs at iteration " + std::to_string(ra.iteration);
          return false;
        }
      }
    } else if (slurp(a / rel) != slurp(b / rel)) {
      *why = rel.string() + " differs";
      return false;
    }
  }
  return true;
}

int sh(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

void criterion_reproducibility(Verdict& v, const fs::path& cli) {
  testing::TempDir dir("accept9");
  const fs::path root = dir.path();

  // Resume at k = 5 against an uninterrupted run, 10 steps after the resume.
  {
    const Corpus c = synth_features(6, 1, 909);
    TrainConfig cfg;
    cfg.preset = Preset::kDesk;
    cfg.seed = 9;
    cfg.checkpoint_every = 5;
    auto train = [&](const fs::path& out, std::int64_t iters, std::optional<fs::path> resume) {
      TrainConfig c2 = cfg;
      c2.iterations = iters;
      std::vector<TrainingRecord> recs;
      TrainingRun run;
      run.out_dir = out;
      run.quiet = true;
      run.stats_x = c.stats_a;
      run.stats_y = c.stats_b;
      run.stft = c.stft;
      run.resume_from = resume;
      run.on_step = [&](const TrainingRecord& r) { recs.push_back(r); };
      run_training(c2, c.train_a, c.train_b, run);
      return recs;
    };
    const auto full = train(root / "full", 15, std::nullopt);
    train(root / "part", 5, std::nullopt);
    const auto resumed = train(root / "part", 15, root / "part" / "checkpoint_5.ckpt");
    bool same = resumed.size() == 10 && full.size() == 15;
    for (std::size_t i = 0; same && i < 10; ++i)
      same = resumed[i].iteration == full[i + 5].iteration && resumed[i].losses == full[i + 5].losses;
    v.expect(same, "resumed losses differ from the uninterrupted run");
    v.expect(slurp(root / "full" / "final.ckpt") == slurp(root / "part" / "final.ckpt"),
             "final checkpoints differ after resume");
  }

  // Every subcommand twice under fixed seeds; outputs compared byte for byte.
  const std::string m = "\"" + cli.string() + "\"";
  auto both = [&](const std::string& name, const std::function<std::string(const std::string&)>& cmd) {
    const fs::path a = root / (name + "_a"), b = root / (name + "_b");
    const int ra = sh(cmd(a.string())), rb = sh(cmd(b.string()));
    std::string why;
    if (!v.expect(ra == 0 && rb == 0, name + " exited nonzero")) return;
    v.expect(same_tree(a, b, &why), name + ": " + why);
  };
  const std::string corpus = (root / "corpus").string();
  v.expect(sh(m + " synth --out " + corpus + " --utterances 4 --eval 2 --seed 5") == 0, "synth failed");
  both("synth", [&](const std::string& o) { return m + " synth --out " + o + " --utterances 4 --eval 2 --seed 5"; });
  for (const char* d : {"train/A", "train/B", "eval/A", "eval/B"}) {
    std::string tag = d;
    std::replace(tag.begin(), tag.end(), '/', '_');
    sh(m + " featurize --mel-bins 40 --in " + corpus + "/" + d + " --out " + (root / ("f_" + tag)).string());
  }
  both("featurize", [&](const std::string& o) {
    return m + " featurize --mel-bins 40 --in " + corpus + "/train/A --out " + o;
  });
  both("stats", [&](const std::string& o) {
    return "mkdir -p " + o + " && " + m + " stats --in " + (root / "f_train_A").string() + " --out " + o + "/s.json";
  });
  const std::string train_args = " train --preset micro --set mel_bins=40 --set crop_frames=16 --iterations 12"
                                 " --set checkpoint_every=6 --seed 4 --quiet --x " +
                                 (root / "f_train_A").string() + " --y " + (root / "f_train_B").string();
  both("train", [&](const std::string& o) { return m + train_args + " --out " + o; });
  const std::string ck = (root / "train_a" / "final.ckpt").string();
  both("convert", [&](const std::string& o) {
    return m + " convert --checkpoint " + ck + " --direction xy --wav --gl-iterations 4 --seed 3 --in " +
           (root / "f_eval_A").string() + " --out " + o;
  });
  both("evaluate", [&](const std::string& o) {
    return "mkdir -p " + o + " && " + m + " evaluate --converted " + (root / "convert_a").string() + " --target " +
           (root / "f_eval_B").string() + " --out " + o + "/mcd.csv";
  });
  {
    std::ofstream(root / "matrix.cfg") << "[matrix]\nname = repro\nseeds = 1, 2\n[base]\npreset = micro\n"
                                          "mel_bins = 40\ncrop_frames = 16\niterations = 4\ncheckpoint_every = 4\n"
                                          "[variant FIF 0]\nmask_policy = FIF 0\n"
                                          "[variant FIF 0-50]\nmask_policy = FIF 0-50\n";
  }
  both("ablate", [&](const std::string& o) {
    return m + " ablate --matrix " + (root / "matrix.cfg").string() + " --corpus " + corpus + " --out " + o;
  });
  both("inspect-checkpoint", [&](const std::string& o) {
    return "mkdir -p " + o + " && " + m + " inspect-checkpoint " + ck + " > " + o + "/describe.txt";
  });
  v.note("resume at 5 + 10 steps; 8 subcommands run twice");
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Verdict&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const fs::path cli = MASKVC_CLI_PATH;
  const std::vector<Criterion> all{
      {1, "loss-oracle suite", criterion_loss_oracles},
      {2, "gradient check (h = 1e-4)", criterion_gradient},
      {3, "mask-law suite", criterion_mask_laws},
      {4, "equivalence reductions", criterion_equivalences},
      {5, "parameter budget", criterion_params},
      {6, "self-mapping sanity", criterion_self_mapping},
      {7, "FIF ordering", criterion_fif_ordering},
      {8, "metric suite", criterion_metrics},
      {9, "reproducibility", [&](Verdict& v) { criterion_reproducibility(v, cli); }},
  };
  const std::map<int, double> budget_s{{1, 60}, {2, 300}, {3, 60}, {8, 60}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.expect(false, std::string("exception: ") + e.what());
    }
    const double elapsed = seconds_since(t0);
    if (auto b = budget_s.find(c.id); b != budget_s.end())
      v.expect(elapsed < b->second, "runtime " + num(elapsed, 3) + " s over " + num(b->second) + " s");
    failures += !v.passed();
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (v.passed() ? "PASS" : "FAIL") << "  ["
              << v.summary() << "] " << std::fixed << std::setprecision(1) << elapsed << " s" << std::defaultfloat
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
