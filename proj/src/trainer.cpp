#include "maskvc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include "json.hpp"

#include "maskvc/checkpoint.hpp"
#include "maskvc/error.hpp"
#include "maskvc/kernels/kernels.hpp"

namespace maskvc {

namespace fs = std::filesystem;

template <typename T>
Networks<T> make_networks(const TrainConfig& cfg) {
  const int in_ch = cfg.mask_input ? 2 : 1;
  const auto gs = ConverterSpec::for_preset(cfg.preset, cfg.mel_bins, in_ch);
  const auto ds = DiscriminatorSpec::for_preset(cfg.preset, cfg.mel_bins);
  auto seed = [&](std::uint64_t k) { return derive_seed(cfg.seed, kInitStream, k); };
  return Networks<T>{make_converter<T>(gs, seed(0)),     make_converter<T>(gs, seed(1)),
                     make_discriminator<T>(ds, seed(2)), make_discriminator<T>(ds, seed(3)),
                     make_discriminator<T>(ds, seed(4)), make_discriminator<T>(ds, seed(5))};
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments<T>& mo,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || mo.m.size() != params.size() ||
      mo.v.size() != params.size())
    throw Error(ErrorKind::kData, "Adam: parameter, gradient and moment sizes differ");
  ++mo.steps;
  const double t = static_cast<double>(mo.steps);
  kernels::AdamStep<T> s{static_cast<T>(cfg.lr),
                         static_cast<T>(cfg.beta1),
                         static_cast<T>(cfg.beta2),
                         static_cast<T>(cfg.eps),
                         static_cast<T>(1.0 - std::pow(cfg.beta1, t)),
                         static_cast<T>(1.0 - std::pow(cfg.beta2, t))};
  kernels::adam_update<T>(params, grads, mo.m, mo.v, s);
}

TrainState make_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st{make_networks<float>(cfg), {}, {}, {}, {}, {}, {}, 0, cfg.seed};
  st.opt_g_xy = AdamMoments<float>(st.nets.g_xy.params.size());
  st.opt_g_yx = AdamMoments<float>(st.nets.g_yx.params.size());
  st.opt_d_x = AdamMoments<float>(st.nets.d_x.params.size());
  st.opt_d_y = AdamMoments<float>(st.nets.d_y.params.size());
  st.opt_d2_x = AdamMoments<float>(st.nets.d2_x.params.size());
  st.opt_d2_y = AdamMoments<float>(st.nets.d2_y.params.size());
  return st;
}

namespace {

template <typename T>
nn::Tensor<T> plane(std::span<const T> v, int bins, int frames) {
  nn::Tensor<T> t(1, bins, frames);
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

template <typename T>
std::vector<T> mask_values(const Mask& m) {
  return std::vector<T>(m.values.begin(), m.values.end());
}

template <typename T>
void check_batch(const StepBatch<T>& b) {
  const std::size_t n = static_cast<std::size_t>(b.bins) * b.frames;
  if (b.x.size() != n || b.y.size() != n || b.m_x.values.size() != n ||
      b.m_y.values.size() != n)
    throw Error(ErrorKind::kData, "step batch: crop and mask sizes differ");
}

}  // namespace

template <typename T>
GeneratorPass<T> forward_generators(const Networks<T>& nets, const StepBatch<T>& b,
                                    bool identity) {
  check_batch(b);
  const int F = b.bins;
  const int N = b.frames;
  const std::size_t n = static_cast<std::size_t>(F) * N;
  const auto mx = mask_values<T>(b.m_x);
  const auto my = mask_values<T>(b.m_y);
  const std::vector<T> ones(n, T(1));
  std::vector<T> x_hat(n), y_hat(n);
  for (std::size_t i = 0; i < n; ++i) {
    x_hat[i] = b.x[i] * mx[i];
    y_hat[i] = b.y[i] * my[i];
  }
  const auto& gxy = nets.g_xy;
  const auto& gyx = nets.g_yx;
  const int cxy = gxy.spec.in_channels;
  const int cyx = gyx.spec.in_channels;

  GeneratorPass<T> p;
  p.identity = identity;
  p.y_fake = nn::forward<T>(gxy.net, gxy.params,
                            converter_input<T>(x_hat, mx, F, N, cxy), &p.xy_first);
  p.x_cycle = nn::forward<T>(gyx.net, gyx.params,
                             converter_input<T>(p.y_fake.data, ones, F, N, cyx), &p.yx_second);
  p.x_fake = nn::forward<T>(gyx.net, gyx.params,
                            converter_input<T>(y_hat, my, F, N, cyx), &p.yx_first);
  p.y_cycle = nn::forward<T>(gxy.net, gxy.params,
                             converter_input<T>(p.x_fake.data, ones, F, N, cxy), &p.xy_second);
  if (identity) {
    p.y_id = nn::forward<T>(gxy.net, gxy.params, converter_input<T>(b.y, ones, F, N, cxy),
                            &p.xy_id);
    p.x_id = nn::forward<T>(gyx.net, gyx.params, converter_input<T>(b.x, ones, F, N, cyx),
                            &p.yx_id);
  }
  return p;
}

template <typename T>
DiscriminatorLosses discriminator_losses(const Networks<T>& nets, const StepBatch<T>& b,
                                         const GeneratorPass<T>& p, std::vector<T>* grad_d_x,
                                         std::vector<T>* grad_d_y, std::vector<T>* grad_d2_x,
                                         std::vector<T>* grad_d2_y) {
  check_batch(b);
  auto one = [&](const Discriminator<T>& d, std::span<const T> real, const nn::Tensor<T>& fake,
                 std::vector<T>* grad) {
    nn::Tape<T> tr, tf;
    const bool g = grad != nullptr;
    auto sr = nn::forward<T>(d.net, d.params, plane(real, b.bins, b.frames), g ? &tr : nullptr);
    auto sf = nn::forward<T>(d.net, d.params, fake, g ? &tf : nullptr);
    if (!g) return lsgan_d_loss<T>(sr.data, sf.data);
    nn::Tensor<T> gr(sr.channels, sr.height, sr.width);
    nn::Tensor<T> gf(sf.channels, sf.height, sf.width);
    const double loss = lsgan_d_loss_grad<T>(sr.data, sf.data, gr.data, gf.data);
    grad->resize(d.params.size(), T(0));
    nn::backward<T>(d.net, d.params, tr, std::move(gr), *grad, false);
    nn::backward<T>(d.net, d.params, tf, std::move(gf), *grad, false);
    return loss;
  };
  DiscriminatorLosses out;
  out.d_y = one(nets.d_y, b.y, p.y_fake, grad_d_y);
  out.d_x = one(nets.d_x, b.x, p.x_fake, grad_d_x);
  out.d2_x = one(nets.d2_x, b.x, p.x_cycle, grad_d2_x);
  out.d2_y = one(nets.d2_y, b.y, p.y_cycle, grad_d2_y);
  return out;
}

template <typename T>
LossBreakdown generator_losses(const Networks<T>& nets, const StepBatch<T>& b,
                               const GeneratorPass<T>& p, const LossWeights& w,
                               std::int64_t iteration, std::vector<T>* grad_g_xy,
                               std::vector<T>* grad_g_yx) {
  check_batch(b);
  if ((grad_g_xy == nullptr) != (grad_g_yx == nullptr))
    throw Error(ErrorKind::kUsage, "generator_losses needs both or neither gradient buffers");
  const bool want = grad_g_xy != nullptr;
  const std::size_t n = b.x.size();
  const auto& gxy = nets.g_xy;
  const auto& gyx = nets.g_yx;
  if (want) {
    grad_g_xy->resize(gxy.params.size(), T(0));
    grad_g_yx->resize(gyx.params.size(), T(0));
  }

  // Least-squares generator loss of `fake` under D; dLoss/dfake when asked.
  auto adv = [&](const Discriminator<T>& d, const nn::Tensor<T>& fake, nn::Tensor<T>* dfake) {
    nn::Tape<T> tape;
    auto s = nn::forward<T>(d.net, d.params, fake, dfake ? &tape : nullptr);
    if (!dfake) return lsgan_g_loss<T>(s.data);
    nn::Tensor<T> gs(s.channels, s.height, s.width);
    const double loss = lsgan_g_loss_grad<T>(s.data, gs.data);
    *dfake = nn::backward<T>(d.net, d.params, tape, std::move(gs), {}, true);
    return loss;
  };
  // Adds scale * dL1(pred, target)/dpred into acc and returns the L1 value.
  auto l1 = [&](const nn::Tensor<T>& pred, std::span<const T> target, double scale,
                nn::Tensor<T>* acc) {
    if (!acc) return masked_cycle_loss<T>(target, pred.data);
    std::vector<T> g(n);
    const double loss = l1_loss_grad<T>(pred.data, target, g);
    const T s = static_cast<T>(scale);
    for (std::size_t i = 0; i < n; ++i) acc->data[i] += s * g[i];
    return loss;
  };

  LossBreakdown L;
  // One cycle: a -> fake (g_first) -> cycle (g_second), judged by d_fake and
  // d_cycle, reconstructed against `a`.
  auto cycle = [&](const Converter<T>& g_first, const nn::Tape<T>& first_tape,
                   std::vector<T>* grad_first, const Converter<T>& g_second,
                   const nn::Tape<T>& second_tape, std::vector<T>* grad_second,
                   const Discriminator<T>& d_fake, const Discriminator<T>& d_cycle,
                   const nn::Tensor<T>& fake, const nn::Tensor<T>& cyc, std::span<const T> a,
                   double& adv_term, double& adv2_term, double& cyc_term) {
    nn::Tensor<T> d_fk, d_cy;
    adv_term = adv(d_fake, fake, want ? &d_fk : nullptr);
    adv2_term = adv(d_cycle, cyc, want ? &d_cy : nullptr);
    cyc_term = l1(cyc, a, w.lambda_cyc, want ? &d_cy : nullptr);
    if (!want) return;
    auto d_in = nn::backward<T>(g_second.net, g_second.params, second_tape, std::move(d_cy),
                                *grad_second, true);
    for (std::size_t i = 0; i < n; ++i) d_fk.data[i] += d_in.data[i];
    nn::backward<T>(g_first.net, g_first.params, first_tape, std::move(d_fk), *grad_first,
                    false);
  };
  cycle(gxy, p.xy_first, grad_g_xy, gyx, p.yx_second, grad_g_yx, nets.d_y, nets.d2_x, p.y_fake,
        p.x_cycle, b.x, L.adv_xy, L.adv2_xyx, L.cyc_xyx);
  cycle(gyx, p.yx_first, grad_g_yx, gxy, p.xy_second, grad_g_xy, nets.d_x, nets.d2_y, p.x_fake,
        p.y_cycle, b.y, L.adv_yx, L.adv2_yxy, L.cyc_yxy);

  if (p.identity) {
    const bool grad_id = want && identity_active(w, iteration);
    auto ident = [&](const Converter<T>& g, const nn::Tape<T>& tape, std::vector<T>* grad,
                     const nn::Tensor<T>& mapped, std::span<const T> target) {
      if (!grad_id) return identity_loss<T>(mapped.data, target);
      nn::Tensor<T> d(mapped.channels, mapped.height, mapped.width);
      const double loss = l1(mapped, target, w.lambda_id, &d);
      nn::backward<T>(g.net, g.params, tape, std::move(d), *grad, false);
      return loss;
    };
    L.id_xy = ident(gxy, p.xy_id, grad_g_xy, p.y_id, b.y);
    L.id_yx = ident(gyx, p.yx_id, grad_g_yx, p.x_id, b.x);
  }
  L.total_g = full_objective(L, DiscriminatorLosses{}, w, iteration).g_total;
  return L;
}

MelSpectrogram crop_frames(const MelSpectrogram& mel, int n, Rng& rng) {
  if (n < 1) throw Error(ErrorKind::kConfig, "crop length must be >= 1");
  if (mel.frames < n)
    throw Error(ErrorKind::kData, "utterance has " + std::to_string(mel.frames) +
                                      " frames, shorter than the crop of " + std::to_string(n));
  const int start = static_cast<int>(uniform_int(rng, 0, mel.frames - n));
  MelSpectrogram out(mel.bins, n);
  out.domain = mel.domain;
  out.normalized = mel.normalized;
  for (int f = 0; f < mel.bins; ++f)
    std::copy_n(mel.values.begin() + static_cast<std::ptrdiff_t>(f) * mel.frames + start, n,
                out.values.begin() + static_cast<std::ptrdiff_t>(f) * n);
  return out;
}

namespace {

void require_finite_breakdown(const LossBreakdown& L, std::int64_t iteration) {
  const std::pair<const char*, double> terms[] = {
      {"adv_xy", L.adv_xy},     {"adv_yx", L.adv_yx},     {"cyc_xyx", L.cyc_xyx},
      {"cyc_yxy", L.cyc_yxy},   {"id_xy", L.id_xy},       {"id_yx", L.id_yx},
      {"adv2_xyx", L.adv2_xyx}, {"adv2_yxy", L.adv2_yxy}, {"total_g", L.total_g},
      {"total_d", L.total_d}};
  for (const auto& [name, v] : terms) {
    if (std::isfinite(v)) continue;
    std::string dump;
    for (const auto& [n2, v2] : terms) dump += std::string(" ") + n2 + "=" + std::to_string(v2);
    throw Error(ErrorKind::kNumeric, std::string("non-finite ") + name + " at iteration " +
                                         std::to_string(iteration) + ";" + dump);
  }
}

}  // namespace

LossBreakdown train_step(TrainState& st, const MelSpectrogram& x_crop,
                         const MelSpectrogram& y_crop, const TrainConfig& cfg, Rng& rng,
                         std::pair<Mask, Mask>* masks_out) {
  if (x_crop.bins != y_crop.bins || x_crop.frames != y_crop.frames)
    throw Error(ErrorKind::kData, "x and y crops differ in shape");
  if (x_crop.bins != cfg.mel_bins)
    throw Error(ErrorKind::kData, "crop has " + std::to_string(x_crop.bins) +
                                      " bins, config expects " + std::to_string(cfg.mel_bins));
  const int F = x_crop.bins;
  const int N = x_crop.frames;
  Mask m_x = cfg.mask_input ? sample_mask(cfg.mask_policy, F, N, rng) : all_ones_mask(F, N);
  Mask m_y = cfg.mask_input ? sample_mask(cfg.mask_policy, F, N, rng) : all_ones_mask(F, N);
  StepBatch<float> batch{x_crop.values, y_crop.values, F, N, std::move(m_x), std::move(m_y)};

  auto& nets = st.nets;
  const auto pass = forward_generators(nets, batch, identity_active(cfg.weights, st.iteration));

  const AdamConfig opt_d{cfg.lr_d, cfg.beta1, cfg.beta2, 1e-8};
  const AdamConfig opt_g{cfg.lr_g, cfg.beta1, cfg.beta2, 1e-8};
  DiscriminatorLosses dl;
  if (cfg.update_discriminators) {
    std::vector<float> gdx, gdy, gd2x, gd2y;
    dl = discriminator_losses(nets, batch, pass, &gdx, &gdy, &gd2x, &gd2y);
    adam_step<float>(nets.d_x.params, gdx, st.opt_d_x, opt_d);
    adam_step<float>(nets.d_y.params, gdy, st.opt_d_y, opt_d);
    adam_step<float>(nets.d2_x.params, gd2x, st.opt_d2_x, opt_d);
    adam_step<float>(nets.d2_y.params, gd2y, st.opt_d2_y, opt_d);
  } else {
    dl = discriminator_losses<float>(nets, batch, pass, nullptr, nullptr, nullptr, nullptr);
  }

  std::vector<float> ggxy, ggyx;
  LossBreakdown L =
      generator_losses(nets, batch, pass, cfg.weights, st.iteration, &ggxy, &ggyx);
  L.total_d = dl.d_x + dl.d_y + dl.d2_x + dl.d2_y;
  require_finite_breakdown(L, st.iteration);
  adam_step<float>(nets.g_xy.params, ggxy, st.opt_g_xy, opt_g);
  adam_step<float>(nets.g_yx.params, ggyx, st.opt_g_yx, opt_g);
  ++st.iteration;
  if (masks_out) *masks_out = {std::move(batch.m_x), std::move(batch.m_y)};
  return L;
}

std::string training_record_json(const TrainingRecord& r) {
  const auto& L = r.losses;
  nlohmann::ordered_json j;
  j["iteration"] = r.iteration;
  j["wall_time_s"] = r.wall_time_s;
  j["adv_xy"] = L.adv_xy;
  j["adv_yx"] = L.adv_yx;
  j["cyc_xyx"] = L.cyc_xyx;
  j["cyc_yxy"] = L.cyc_yxy;
  j["id_xy"] = L.id_xy;
  j["id_yx"] = L.id_yx;
  j["adv2_xyx"] = L.adv2_xyx;
  j["adv2_yxy"] = L.adv2_yxy;
  j["total_g"] = L.total_g;
  j["total_d"] = L.total_d;
  j["mask_start"] = r.mask_start;
  j["mask_extent"] = r.mask_extent;
  return j.dump();
}

TrainingRecord parse_training_record(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    TrainingRecord r;
    r.iteration = j.at("iteration").get<std::int64_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    auto& L = r.losses;
    L.adv_xy = j.at("adv_xy").get<double>();
    L.adv_yx = j.at("adv_yx").get<double>();
    L.cyc_xyx = j.at("cyc_xyx").get<double>();
    L.cyc_yxy = j.at("cyc_yxy").get<double>();
    L.id_xy = j.at("id_xy").get<double>();
    L.id_yx = j.at("id_yx").get<double>();
    L.adv2_xyx = j.at("adv2_xyx").get<double>();
    L.adv2_yxy = j.at("adv2_yxy").get<double>();
    L.total_g = j.at("total_g").get<double>();
    L.total_d = j.at("total_d").get<double>();
    r.mask_start = j.value("mask_start", 0);
    r.mask_extent = j.value("mask_extent", 0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("malformed training log line: ") + e.what());
  }
}

namespace {

std::vector<std::size_t> eligible(const std::vector<MelSpectrogram>& corpus,
                                  const TrainConfig& cfg, const char* name, bool quiet) {
  if (corpus.empty()) throw Error(ErrorKind::kData, std::string("corpus ") + name + " is empty");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& m = corpus[i];
    if (!m.normalized)
      throw Error(ErrorKind::kData, std::string("corpus ") + name + " item " +
                                        std::to_string(i) + " is not normalized");
    if (m.bins != cfg.mel_bins)
      throw Error(ErrorKind::kData, std::string("corpus ") + name + " item " +
                                        std::to_string(i) + " has " + std::to_string(m.bins) +
                                        " bins, expected " + std::to_string(cfg.mel_bins));
    if (m.frames < cfg.crop_frames) {
      if (!quiet)
        std::cerr << "warning: skipping corpus " << name << " item " << i << " (" << m.frames
                  << " frames < " << cfg.crop_frames << ")\n";
      continue;
    }
    out.push_back(i);
  }
  if (out.empty())
    throw Error(ErrorKind::kData, std::string("corpus ") + name + " has no utterance with at least " +
                                      std::to_string(cfg.crop_frames) + " frames");
  return out;
}

// Keeps only log lines for iterations before `until` (resume from an
// earlier checkpoint than the log's end).
void truncate_log(const fs::path& log_path, std::int64_t until) {
  std::vector<std::string> keep;
  {
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (parse_training_record(line).iteration < until) keep.push_back(line);
    }
  }
  std::ofstream out(log_path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
  if (!out) throw Error(ErrorKind::kIo, "cannot rewrite " + log_path.string());
}

}  // namespace

fs::path run_training(const TrainConfig& cfg, const std::vector<MelSpectrogram>& corpus_x,
                      const std::vector<MelSpectrogram>& corpus_y, const TrainingRun& run) {
  cfg.validate();
  const auto ix = eligible(corpus_x, cfg, "X", run.quiet);
  const auto iy = eligible(corpus_y, cfg, "Y", run.quiet);

  std::error_code ec;
  fs::create_directories(run.out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + run.out_dir.string() + ": " + ec.message());

  Checkpoint ck{cfg, {}, run.stats_x, run.stats_y, run.stft};
  if (run.resume_from) {
    auto loaded = load_checkpoint(*run.resume_from, &cfg, run.force);
    ck.state = std::move(loaded.state);
  } else {
    ck.state = make_train_state(cfg);
  }
  TrainState& st = ck.state;
  const TrainConfig& rc = ck.config;

  const fs::path log_path = run.out_dir / "train_log.jsonl";
  if (run.resume_from && fs::exists(log_path))
    truncate_log(log_path, st.iteration);
  else if (!run.resume_from)
    fs::remove(log_path, ec);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw Error(ErrorKind::kIo, "cannot open " + log_path.string());

  const auto t0 = std::chrono::steady_clock::now();
  auto save = [&](const fs::path& p) {
    log.flush();
    if (!log) throw Error(ErrorKind::kIo, "write failed: " + log_path.string());
    save_checkpoint(p, ck);
  };
  while (st.iteration < rc.iterations) {
    const std::int64_t i = st.iteration;
    Rng rng(derive_seed(st.seed, kStepStream, static_cast<std::uint64_t>(i)));
    const auto& x = corpus_x[ix[uniform_int(rng, 0, static_cast<std::int64_t>(ix.size()) - 1)]];
    const auto& y = corpus_y[iy[uniform_int(rng, 0, static_cast<std::int64_t>(iy.size()) - 1)]];
    const auto xc = crop_frames(x, rc.crop_frames, rng);
    const auto yc = crop_frames(y, rc.crop_frames, rng);
    std::pair<Mask, Mask> masks;
    TrainingRecord rec;
    rec.losses = train_step(st, xc, yc, rc, rng, &masks);
    rec.iteration = i;
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.mask_start = masks.first.zero_start;
    rec.mask_extent = masks.first.zero_extent;
    log << training_record_json(rec) << '\n';
    if (run.on_step) run.on_step(rec);
    if (!run.quiet && (st.iteration % 100 == 0 || st.iteration == rc.iterations))
      std::cerr << "iter " << st.iteration << "/" << rc.iterations << "  g=" << rec.losses.total_g
                << "  d=" << rec.losses.total_d << "  (" << rec.wall_time_s << " s)\n";
    if (st.iteration % rc.checkpoint_every == 0)
      save(run.out_dir / ("checkpoint_" + std::to_string(st.iteration) + ".ckpt"));
  }
  const fs::path final_path = run.out_dir / "final.ckpt";
  save(final_path);
  return final_path;
}

#define MASKVC_INSTANTIATE(T)                                                                 \
  template Networks<T> make_networks<T>(const TrainConfig&);                                  \
  template void adam_step<T>(std::span<T>, std::span<const T>, AdamMoments<T>&,               \
                             const AdamConfig&);                                              \
  template GeneratorPass<T> forward_generators<T>(const Networks<T>&, const StepBatch<T>&,    \
                                                  bool);                                      \
  template DiscriminatorLosses discriminator_losses<T>(                                       \
      const Networks<T>&, const StepBatch<T>&, const GeneratorPass<T>&, std::vector<T>*,      \
      std::vector<T>*, std::vector<T>*, std::vector<T>*);                                     \
  template LossBreakdown generator_losses<T>(const Networks<T>&, const StepBatch<T>&,         \
                                             const GeneratorPass<T>&, const LossWeights&,     \
                                             std::int64_t, std::vector<T>*, std::vector<T>*);

MASKVC_INSTANTIATE(float)
MASKVC_INSTANTIATE(double)

#undef MASKVC_INSTANTIATE

}  // namespace maskvc
