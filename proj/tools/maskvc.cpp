// maskvc: command-line front end for feature extraction, training,
// conversion, evaluation and ablation runs. See README.md for the manual.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maskvc/checkpoint.hpp"
#include "maskvc/error.hpp"
#include "maskvc/evaluation.hpp"
#include "maskvc/features.hpp"
#include "maskvc/runtime.hpp"
#include "maskvc/synth_corpus.hpp"
#include "maskvc/trainer.hpp"

namespace fs = std::filesystem;
using namespace maskvc;

namespace {

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorKind::kData, "no " + ext + " files in " + dir.string());
  return out;
}

struct FeatureSet {
  std::vector<std::string> names;
  std::vector<MelSpectrogram> mels;
  StftConfig stft;
};

FeatureSet load_feature_dir(const fs::path& dir) {
  FeatureSet set;
  bool first = true;
  for (const auto& p : list_files(dir, ".f32")) {
    FeatureFile f = load_features(p);
    if (first) {
      set.stft = f.stft;
      first = false;
    } else if (!(f.stft == set.stft)) {
      throw Error(ErrorKind::kData, p.filename().string() + ": STFT settings differ from the rest of " + dir.string());
    }
    set.names.push_back(p.filename().string());
    set.mels.push_back(std::move(f.mel));
  }
  return set;
}

std::vector<MelSpectrogram> featurize_dir(const fs::path& dir, const StftConfig& stft, bool allow_resample,
                                          const std::string& domain) {
  std::vector<MelSpectrogram> out;
  for (const auto& p : list_files(dir, ".wav")) {
    auto mel = mel_spectrogram(conform_rate(load_waveform(p), stft.sample_rate_hz, allow_resample), stft);
    mel.domain = domain;
    out.push_back(std::move(mel));
  }
  return out;
}

std::vector<MelSpectrogram> normalize_all(const std::vector<MelSpectrogram>& mels, const NormStats& s) {
  std::vector<MelSpectrogram> out;
  out.reserve(mels.size());
  for (const auto& m : mels) out.push_back(m.normalized ? m : normalize(m, s));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---- subcommands ------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  int utterances = 10;
  int eval = 5;
  double min_s = 1.0, max_s = 2.0;
  std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.n_utterances = a.utterances;
  spec.n_eval = a.eval;
  spec.min_duration_s = a.min_s;
  spec.max_duration_s = a.max_s;
  spec.seed = a.seed;
  const auto rows = write_corpus(spec, a.out);
  std::cout << "wrote " << rows.size() << " files and manifest.csv to " << a.out.string() << '\n';
}

struct FeaturizeArgs {
  fs::path in, out;
  std::string domain;
  int mel_bins = 80;
  bool resample = false;
};

void run_featurize(const FeaturizeArgs& a) {
  StftConfig stft;
  stft.mel_bins = a.mel_bins;
  stft.validate();
  fs::create_directories(a.out);
  const auto files = list_files(a.in, ".wav");
  for (const auto& p : files) {
    auto mel = mel_spectrogram(conform_rate(load_waveform(p), stft.sample_rate_hz, a.resample), stft);
    mel.domain = a.domain;
    save_features(a.out / p.filename().replace_extension(".f32"), FeatureFile{mel, stft, ""});
  }
  std::cout << "featurized " << files.size() << " files into " << a.out.string() << '\n';
}

struct StatsArgs {
  fs::path in, out;
  std::string id;
};

void run_stats(const StatsArgs& a) {
  const auto set = load_feature_dir(a.in);
  std::vector<int> clamped;
  const auto stats = compute_norm_stats(set.mels, a.id.empty() ? a.in.filename().string() : a.id, &clamped);
  save_norm_stats(a.out, stats);
  std::cout << "statistics over " << set.mels.size() << " files written to " << a.out.string() << '\n';
}

struct TrainArgs {
  fs::path config, x, y, out, stats_x, stats_y, resume;
  std::vector<std::string> sets;
  std::int64_t iterations = -1;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool force = false, quiet = false;
};

NormStats stats_or_compute(const fs::path& path, const std::vector<MelSpectrogram>& mels, const std::string& id) {
  if (!path.empty()) return load_norm_stats(path);
  return compute_norm_stats(mels, id);
}

void run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : TrainConfig::load(a.config);
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kUsage, "--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (a.iterations >= 0) cfg.iterations = a.iterations;
  if (!a.preset.empty()) cfg.preset = parse_preset(a.preset);
  if (a.seed_given) cfg.seed = a.seed;
  cfg.validate();

  const auto xs = load_feature_dir(a.x);
  const auto ys = load_feature_dir(a.y);
  if (!(xs.stft == ys.stft)) throw Error(ErrorKind::kData, "X and Y features use different STFT settings");
  if (xs.stft.mel_bins != cfg.mel_bins)
    throw Error(ErrorKind::kConfig, "mel_bins = " + std::to_string(cfg.mel_bins) + " but features have " +
                                        std::to_string(xs.stft.mel_bins) + " bins");
  TrainingRun run;
  run.out_dir = a.out;
  run.force = a.force;
  run.quiet = a.quiet;
  run.stft = xs.stft;
  run.stats_x = stats_or_compute(a.stats_x, xs.mels, "X:" + a.x.string());
  run.stats_y = stats_or_compute(a.stats_y, ys.mels, "Y:" + a.y.string());
  if (!a.resume.empty()) run.resume_from = a.resume;
  fs::create_directories(a.out);
  write_text(a.out / "run.cfg", cfg.to_ini());
  const auto final_path =
      run_training(cfg, normalize_all(xs.mels, run.stats_x), normalize_all(ys.mels, run.stats_y), run);
  std::cout << "final checkpoint: " << final_path.string() << '\n';
}

struct ConvertArgs {
  fs::path checkpoint, in, out;
  std::string direction;
  bool wav = false;
  int gl_iterations = 32;
  std::uint64_t seed = 0;
};

void run_convert(const ConvertArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  ConvertOptions opt;
  opt.write_wav = a.wav;
  opt.griffin_lim_iterations = a.gl_iterations;
  opt.seed = a.seed;
  const auto report = convert_corpus(ck, a.in, a.out, parse_direction(a.direction), opt);
  std::cout << report.rows.size() - report.failures() << " of " << report.rows.size() << " files converted; report at "
            << (a.out / "report.csv").string() << '\n';
  if (report.failures() > 0)
    throw Error(ErrorKind::kData, std::to_string(report.failures()) + " file(s) failed, see report.csv");
}

struct EvaluateArgs {
  fs::path converted, target, out;
  int order = kDefaultCepstralOrder;
};

void run_evaluate(const EvaluateArgs& a) {
  const auto conv = load_feature_dir(a.converted);
  std::ostringstream csv;
  csv << "file,mcd_db\n";
  double total = 0;
  for (std::size_t i = 0; i < conv.names.size(); ++i) {
    const fs::path tpath = a.target / conv.names[i];
    if (!fs::exists(tpath)) throw Error(ErrorKind::kIo, "no target for " + conv.names[i] + " in " + a.target.string());
    const auto tgt = load_features(tpath);
    const double d = mcd(mel_cepstrum(conv.mels[i], a.order), mel_cepstrum(tgt.mel, a.order));
    total += d;
    csv << conv.names[i] << ',' << fixed(d, 4) << '\n';
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  std::cerr << "mean MCD over " << conv.names.size() << " files: " << fixed(total / conv.names.size(), 4) << " dB\n";
}

struct AblateArgs {
  fs::path matrix, corpus, out;
  std::vector<std::uint64_t> seeds;
  bool resample = false;
  bool quiet = true;
};

void run_ablate(const AblateArgs& a) {
  AblationMatrix m = AblationMatrix::load(a.matrix);
  if (!a.seeds.empty()) m.seeds = a.seeds;
  if (m.variants.empty()) throw Error(ErrorKind::kConfig, "matrix defines no variants");
  // Feature resolution follows the first cell; all cells must agree.
  const int bins = m.config_for(m.variants.front(), m.seeds.front()).mel_bins;
  for (const auto& v : m.variants)
    if (m.config_for(v, m.seeds.front()).mel_bins != bins)
      throw Error(ErrorKind::kConfig, "all variants must share mel_bins");
  AblationData data;
  data.stft.mel_bins = bins;
  data.stft.validate();
  const auto train_a = featurize_dir(a.corpus / "train" / "A", data.stft, a.resample, "X");
  const auto train_b = featurize_dir(a.corpus / "train" / "B", data.stft, a.resample, "Y");
  data.stats_x = compute_norm_stats(train_a, "train/A");
  data.stats_y = compute_norm_stats(train_b, "train/B");
  data.train_x = normalize_all(train_a, data.stats_x);
  data.train_y = normalize_all(train_b, data.stats_y);
  data.eval_x = featurize_dir(a.corpus / "eval" / "A", data.stft, a.resample, "X");
  data.eval_y = featurize_dir(a.corpus / "eval" / "B", data.stft, a.resample, "Y");
  data.pair_xy = "A-B";
  data.pair_yx = "B-A";
  const auto report = run_ablation(m, data, a.out, a.quiet);
  write_text(a.out / "ablation.csv", report.csv());
  std::cout << report.csv() << '\n' << report.table();
}

struct InspectArgs {
  fs::path checkpoint;
};

void run_inspect(const InspectArgs& a) { std::cout << describe_checkpoint(load_checkpoint(a.checkpoint)); }

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kIo: return 3;
    case ErrorKind::kFormat: return 4;
    case ErrorKind::kConfig: return 5;
    case ErrorKind::kData: return 6;
    case ErrorKind::kNumeric: return 7;
    case ErrorKind::kCheckpoint: return 8;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked cycle-consistent voice conversion on mel-spectrograms", "maskvc"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render a two-voice synthetic corpus with a manifest");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--utterances", synth.utterances, "Training utterances per voice")->capture_default_str();
  c_synth->add_option("--eval", synth.eval, "Parallel evaluation pairs")->capture_default_str();
  c_synth->add_option("--min-duration", synth.min_s, "Shortest utterance [s]")->capture_default_str();
  c_synth->add_option("--max-duration", synth.max_s, "Longest utterance [s]")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Corpus seed")->capture_default_str();

  FeaturizeArgs feat;
  auto* c_feat = app.add_subcommand("featurize", "Compute log-mel features for every WAV in a directory");
  c_feat->add_option("--in", feat.in, "Directory of mono WAV files")->required();
  c_feat->add_option("--out", feat.out, "Output directory for .f32 feature files")->required();
  c_feat->add_option("--domain", feat.domain, "Domain label stored in each header");
  c_feat->add_option("--mel-bins", feat.mel_bins, "Mel bins")->capture_default_str();
  c_feat->add_flag("--resample", feat.resample, "Resample inputs that are not at 22050 Hz");

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "Per-bin normalization statistics over a feature directory");
  c_stats->add_option("--in", stats.in, "Feature directory")->required();
  c_stats->add_option("--out", stats.out, "Output JSON file")->required();
  c_stats->add_option("--id", stats.id, "Corpus identifier (default: directory name)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train both converters and four discriminators");
  c_train->add_option("--config", train.config, "Run config (INI)");
  c_train->add_option("--set", train.sets, "Override one config key: --set key=value (repeatable)");
  c_train->add_option("--x", train.x, "Domain X feature directory")->required();
  c_train->add_option("--y", train.y, "Domain Y feature directory")->required();
  c_train->add_option("--stats-x", train.stats_x, "Domain X statistics (default: computed from --x)");
  c_train->add_option("--stats-y", train.stats_y, "Domain Y statistics (default: computed from --y)");
  c_train->add_option("--out", train.out, "Run directory")->required();
  c_train->add_option("--iterations", train.iterations, "Total iterations");
  c_train->add_option("--preset", train.preset, "Model scale: full, desk or micro")
      ->check(CLI::IsMember({"full", "desk", "micro"}));
  c_train->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { train.seed = s, train.seed_given = true; },
                                              "Run seed");
  c_train->add_option("--resume", train.resume, "Checkpoint to resume from");
  c_train->add_flag("--force", train.force, "Resume even if the checkpoint's config hash differs");
  c_train->add_flag("--quiet", train.quiet, "No progress output");

  ConvertArgs conv;
  auto* c_conv = app.add_subcommand("convert", "Convert a directory of feature files");
  c_conv->add_option("--checkpoint", conv.checkpoint, "Trained checkpoint")->required();
  c_conv->add_option("--direction", conv.direction, "xy or yx")->required()->check(CLI::IsMember({"xy", "yx"}));
  c_conv->add_option("--in", conv.in, "Input feature directory")->required();
  c_conv->add_option("--out", conv.out, "Output directory")->required();
  c_conv->add_flag("--wav", conv.wav, "Also write Griffin-Lim audition WAVs");
  c_conv->add_option("--gl-iterations", conv.gl_iterations, "Griffin-Lim iterations")->capture_default_str();
  c_conv->add_option("--seed", conv.seed, "Griffin-Lim phase seed")->capture_default_str();

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "MCD between converted and target feature files with matching names");
  c_eval->add_option("--converted", eval.converted, "Converted feature directory")->required();
  c_eval->add_option("--target", eval.target, "Target feature directory")->required();
  c_eval->add_option("--order", eval.order, "Cepstral order")->capture_default_str();
  c_eval->add_option("--out", eval.out, "CSV output (default: stdout)");

  AblateArgs abl;
  auto* c_abl = app.add_subcommand("ablate", "Train and score an ablation matrix on a synthetic corpus");
  c_abl->add_option("--matrix", abl.matrix, "Matrix file (INI)")->required();
  c_abl->add_option("--corpus", abl.corpus, "Corpus root written by synth")->required();
  c_abl->add_option("--out", abl.out, "Output directory")->required();
  c_abl->add_option("--seed", abl.seeds, "Seeds (repeatable; overrides the matrix)");
  c_abl->add_flag("--resample", abl.resample, "Resample inputs that are not at 22050 Hz");
  c_abl->add_flag("!--verbose", abl.quiet, "Show training progress");

  InspectArgs insp;
  auto* c_insp = app.add_subcommand("inspect-checkpoint", "Print a checkpoint's config, shapes and statistics");
  c_insp->add_option("checkpoint", insp.checkpoint, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: usage: " << msg << '\n';
    return 2;
  }

  try {
    if (*c_synth) run_synth(synth);
    else if (*c_feat) run_featurize(feat);
    else if (*c_stats) run_stats(stats);
    else if (*c_train) run_train(train);
    else if (*c_conv) run_convert(conv);
    else if (*c_eval) run_evaluate(eval);
    else if (*c_abl) run_ablate(abl);
    else if (*c_insp) run_inspect(insp);
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << error_class(e.kind()) << ": " << msg << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
