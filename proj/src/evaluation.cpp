#include "maskvc/evaluation.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "maskvc/checkpoint.hpp"
#include "maskvc/error.hpp"
#include "maskvc/runtime.hpp"

namespace maskvc {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kEvalMaskStream = 0x4556'414c;  // "EVAL"

// basis[k * F + n] = s_k cos(pi k (2n + 1) / 2F), orthonormal DCT-II rows.
std::vector<double> dct_basis(int order, int bins) {
  std::vector<double> basis(static_cast<std::size_t>(order) * bins);
  for (int k = 0; k < order; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / bins);
    for (int n = 0; n < bins; ++n)
      basis[static_cast<std::size_t>(k) * bins + n] = s * std::cos(kPi * k * (2 * n + 1) / (2.0 * bins));
  }
  return basis;
}

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  const auto b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

std::string path_safe(const std::string& label) {
  std::string out;
  for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

MelCepstrum mel_cepstrum(const MelSpectrogram& mel, int order) {
  if (mel.normalized) throw Error(ErrorKind::kData, "mel-cepstrum needs a denormalized spectrogram");
  if (order < 1 || order > mel.bins)
    throw Error(ErrorKind::kData, "cepstral order " + std::to_string(order) + " exceeds the " +
                                      std::to_string(mel.bins) + " mel bins");
  const auto basis = dct_basis(order, mel.bins);
  MelCepstrum mc;
  mc.order = order;
  mc.frames = mel.frames;
  mc.values.assign(static_cast<std::size_t>(order) * mel.frames, 0.0);
  for (int t = 0; t < mel.frames; ++t)
    for (int k = 0; k < order; ++k) {
      double acc = 0;
      for (int n = 0; n < mel.bins; ++n) acc += basis[static_cast<std::size_t>(k) * mel.bins + n] * mel.at(n, t);
      mc.values[static_cast<std::size_t>(t) * order + k] = acc;
    }
  return mc;
}

MelSpectrogram inverse_mel_cepstrum(const MelCepstrum& mc, int bins) {
  if (mc.order > bins) throw Error(ErrorKind::kData, "cepstral order exceeds the bin count");
  const auto basis = dct_basis(mc.order, bins);
  MelSpectrogram mel(bins, mc.frames);
  for (int t = 0; t < mc.frames; ++t)
    for (int n = 0; n < bins; ++n) {
      double acc = 0;
      for (int k = 0; k < mc.order; ++k) acc += basis[static_cast<std::size_t>(k) * bins + n] * mc.at(t, k);
      mel.at(n, t) = static_cast<float>(acc);
    }
  return mel;
}

double cepstral_distance(const MelCepstrum& a, int ta, const MelCepstrum& b, int tb) {
  double s = 0;
  for (int c = 1; c < a.order; ++c) {
    const double d = a.at(ta, c) - b.at(tb, c);
    s += d * d;
  }
  return std::sqrt(s);
}

Alignment dtw_align(const MelCepstrum& a, const MelCepstrum& b) {
  if (a.frames < 1 || b.frames < 1) throw Error(ErrorKind::kData, "DTW needs non-empty sequences");
  if (a.order != b.order) throw Error(ErrorKind::kData, "cepstral orders differ");
  const int n = a.frames, m = b.frames;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> D(static_cast<std::size_t>(n) * m, inf);
  auto at = [&](int i, int j) -> double& { return D[static_cast<std::size_t>(i) * m + j]; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double best = 0;
      if (i > 0 || j > 0) {
        best = inf;
        if (i > 0 && j > 0) best = at(i - 1, j - 1);
        if (i > 0) best = std::min(best, at(i - 1, j));
        if (j > 0) best = std::min(best, at(i, j - 1));
      }
      at(i, j) = best + cepstral_distance(a, i, b, j);
    }
  Alignment al;
  al.cost = at(n - 1, m - 1);
  int i = n - 1, j = m - 1;
  al.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = at(i - 1, j - 1);
      const double up = at(i - 1, j);
      const double left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    al.path.emplace_back(i, j);
  }
  std::reverse(al.path.begin(), al.path.end());
  return al;
}

double mcd(const MelCepstrum& converted, const MelCepstrum& target, const Alignment& path) {
  if (path.path.empty()) throw Error(ErrorKind::kData, "empty alignment path");
  if (converted.order != target.order) throw Error(ErrorKind::kData, "cepstral orders differ");
  double s = 0;
  for (const auto& [i, j] : path.path) {
    if (i < 0 || i >= converted.frames || j < 0 || j >= target.frames)
      throw Error(ErrorKind::kData, "alignment path leaves the sequences");
    s += cepstral_distance(converted, i, target, j);
  }
  return kMcdScale * s / static_cast<double>(path.path.size());
}

double mcd(const MelCepstrum& converted, const MelCepstrum& target) {
  return mcd(converted, target, dtw_align(converted, target));
}

double masked_reconstruction_l1(const ConverterParams& forward, const ConverterParams& backward,
                                const std::vector<MelSpectrogram>& held_out, int crop_frames,
                                const MaskPolicy& policy, std::uint64_t seed) {
  double sum = 0;
  std::size_t cells = 0;
  std::uint64_t index = 0;
  for (const auto& mel : held_out) {
    if (!mel.normalized) throw Error(ErrorKind::kData, "held-out spectrograms must be normalized");
    for (int start = 0; start + crop_frames <= mel.frames; start += crop_frames) {
      MelSpectrogram x(mel.bins, crop_frames);
      for (int b = 0; b < mel.bins; ++b)
        for (int t = 0; t < crop_frames; ++t) x.at(b, t) = mel.at(b, start + t);
      x.normalized = true;
      Rng rng(derive_seed(seed, kEvalMaskStream, index++));
      const Mask m = sample_mask(policy, mel.bins, crop_frames, rng);
      const MelSpectrogram y = converter_forward(forward, apply_mask(x, m), m);
      const Mask ones = all_ones_mask(mel.bins, crop_frames);
      const MelSpectrogram back = converter_forward(backward, apply_mask(y, ones), ones);
      for (std::size_t i = 0; i < x.values.size(); ++i)
        if (m.values[i] == 0.0f) {
          sum += std::abs(static_cast<double>(back.values[i]) - x.values[i]);
          ++cells;
        }
    }
  }
  if (cells == 0) throw Error(ErrorKind::kData, "no masked cells in the held-out set");
  return sum / static_cast<double>(cells);
}

AblationMatrix AblationMatrix::parse_ini(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed ablation matrix: ") + e.message() +
                                        " (line " + std::to_string(e.line()) + ")");
  }
  AblationMatrix m;
  m.seeds.clear();
  for (const auto& [section, node] : tree) {
    if (node.empty()) throw Error(ErrorKind::kConfig, "ablation keys must sit in a section: " + section);
    if (section == "matrix") {
      for (const auto& [k, v] : node) {
        if (k == "name") {
          m.name = v.data();
        } else if (k == "seeds") {
          std::istringstream ss(v.data());
          std::string item;
          while (std::getline(ss, item, ',')) {
            item = trim(item);
            std::size_t used = 0;
            unsigned long long s = 0;
            try {
              s = std::stoull(item, &used);
            } catch (const std::logic_error&) {
              used = 0;
            }
            if (item.empty() || used != item.size() || item[0] == '-')
              throw Error(ErrorKind::kConfig, "bad seed '" + item + "'");
            m.seeds.push_back(s);
          }
        } else {
          throw Error(ErrorKind::kConfig, "unknown [matrix] key '" + k + "'");
        }
      }
    } else if (section == "base") {
      for (const auto& [k, v] : node) m.base.emplace_back(k, v.data());
    } else if (section.rfind("variant ", 0) == 0) {
      AblationVariant var;
      var.label = trim(section.substr(8));
      if (var.label.empty()) throw Error(ErrorKind::kConfig, "variant section needs a label");
      for (const auto& [k, v] : node) var.overrides.emplace_back(k, v.data());
      m.variants.push_back(std::move(var));
    } else {
      throw Error(ErrorKind::kConfig, "unknown ablation section [" + section + "]");
    }
  }
  if (m.variants.empty()) throw Error(ErrorKind::kConfig, "ablation matrix has no variants");
  if (m.seeds.empty()) m.seeds.push_back(0);
  // Validate every cell up front.
  for (const auto& v : m.variants) (void)m.config_for(v, m.seeds.front());
  return m;
}

AblationMatrix AblationMatrix::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot open ablation matrix " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_ini(ss.str());
}

TrainConfig AblationMatrix::config_for(const AblationVariant& v, std::uint64_t seed) const {
  TrainConfig cfg;
  for (const auto& [k, val] : base) cfg.set(k, val);
  for (const auto& [k, val] : v.overrides) cfg.set(k, val);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

std::string AblationReport::csv() const {
  std::ostringstream os;
  os << "variant,pair,mcd_db,param_count,seed\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.pair << ',';
    if (r.mcd_db) {
      os << std::fixed << std::setprecision(4) << *r.mcd_db << std::defaultfloat;
    } else {
      os << "failed";
    }
    os << ',' << r.param_count << ',' << r.seed << '\n';
  }
  return os.str();
}

std::string AblationReport::table() const {
  std::vector<std::string> variants, pairs;
  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  std::map<std::string, std::size_t> params;
  for (const auto& r : rows) {
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
    if (std::find(pairs.begin(), pairs.end(), r.pair) == pairs.end()) pairs.push_back(r.pair);
    if (r.mcd_db) cells[{r.variant, r.pair}].push_back(*r.mcd_db);
    if (r.param_count) params[r.variant] = r.param_count;
  }
  std::size_t w0 = 7;
  for (const auto& v : variants) w0 = std::max(w0, v.size());
  std::ostringstream os;
  os << "MCD [dB], median over seeds (KDSD not computed)";
  if (!matrix.empty()) os << " - " << matrix;
  os << '\n' << std::left << std::setw(static_cast<int>(w0)) << "variant";
  for (const auto& p : pairs) os << "  " << std::right << std::setw(9) << p;
  os << "  " << std::setw(9) << "#param" << '\n';
  for (const auto& v : variants) {
    os << std::left << std::setw(static_cast<int>(w0)) << v << std::right;
    for (const auto& p : pairs) {
      const auto it = cells.find({v, p});
      os << "  " << std::setw(9);
      if (it == cells.end()) {
        os << "failed";
      } else {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(3) << median(it->second);
        os << cell.str();
      }
    }
    const auto pc = params.find(v);
    std::ostringstream count;
    if (pc != params.end()) count << std::fixed << std::setprecision(2) << pc->second / 1e6 << "M";
    os << "  " << std::setw(9) << count.str() << '\n';
  }
  return os.str();
}

double corpus_mcd(const ConverterParams& g, const std::vector<MelSpectrogram>& source,
                  const NormStats& source_stats, const std::vector<MelSpectrogram>& target,
                  const NormStats& target_stats, int order) {
  if (source.empty() || source.size() != target.size())
    throw Error(ErrorKind::kData, "held-out source and target sets must be non-empty and parallel");
  double total = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const MelSpectrogram in = source[i].normalized ? source[i] : normalize(source[i], source_stats);
    const MelSpectrogram out = denormalize(convert_normalized(g, in), target_stats);
    const MelSpectrogram ref = target[i].normalized ? denormalize(target[i], target_stats) : target[i];
    total += mcd(mel_cepstrum(out, order), mel_cepstrum(ref, order));
  }
  return total / static_cast<double>(source.size());
}

AblationReport run_ablation(const AblationMatrix& matrix, const AblationData& data,
                            const std::filesystem::path& out_dir, bool quiet) {
  AblationReport report;
  report.matrix = matrix.name;
  for (const auto& variant : matrix.variants) {
    for (const std::uint64_t seed : matrix.seeds) {
      AblationRow xy{variant.label, data.pair_xy, seed, std::nullopt, 0, ""};
      AblationRow yx{variant.label, data.pair_yx, seed, std::nullopt, 0, ""};
      try {
        const TrainConfig cfg = matrix.config_for(variant, seed);
        TrainingRun run;
        run.out_dir = out_dir / path_safe(variant.label) / ("seed_" + std::to_string(seed));
        run.quiet = quiet;
        run.stats_x = data.stats_x;
        run.stats_y = data.stats_y;
        run.stft = data.stft;
        const auto final_path = run_training(cfg, data.train_x, data.train_y, run);
        const Checkpoint ck = load_checkpoint(final_path, &cfg);
        xy.param_count = yx.param_count = ck.state.nets.g_xy.params.size();
        xy.mcd_db = corpus_mcd(ck.state.nets.g_xy, data.eval_x, data.stats_x, data.eval_y, data.stats_y);
        if (!data.pair_yx.empty())
          yx.mcd_db = corpus_mcd(ck.state.nets.g_yx, data.eval_y, data.stats_y, data.eval_x, data.stats_x);
      } catch (const Error& e) {
        xy.error = yx.error = std::string(error_class(e.kind())) + ": " + e.what();
        xy.mcd_db.reset();
        yx.mcd_db.reset();
      }
      report.rows.push_back(std::move(xy));
      if (!data.pair_yx.empty()) report.rows.push_back(std::move(yx));
    }
  }
  return report;
}

}  // namespace maskvc
