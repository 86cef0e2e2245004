#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "maskvc/error.hpp"
#include "maskvc/features.hpp"

namespace maskvc {
namespace {

void check_stats(const MelSpectrogram& mel, const NormStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(mel.bins) || stats.std.size() != stats.mean.size())
    throw Error(ErrorKind::kData, "norm stats have " + std::to_string(stats.mean.size()) +
                                      " bins, spectrogram has " + std::to_string(mel.bins));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

MomentAccumulator::MomentAccumulator(int bins)
    : mean_(static_cast<std::size_t>(bins), 0.0), m2_(static_cast<std::size_t>(bins), 0.0) {}

void MomentAccumulator::add(const MelSpectrogram& mel) {
  if (mel.bins != bins()) throw Error(ErrorKind::kData, "spectrogram bin count differs from the corpus");
  if (mel.normalized) throw Error(ErrorKind::kData, "statistics need unnormalized spectrograms");
  if (mel.frames < 1) return;
  // Exact moments of this spectrogram, then a pairwise merge.
  MomentAccumulator part(mel.bins);
  part.count_ = static_cast<std::uint64_t>(mel.frames);
  for (int b = 0; b < mel.bins; ++b) {
    double s = 0;
    for (int t = 0; t < mel.frames; ++t) s += mel.at(b, t);
    const double mu = s / mel.frames;
    double q = 0;
    for (int t = 0; t < mel.frames; ++t) {
      const double d = mel.at(b, t) - mu;
      q += d * d;
    }
    part.mean_[static_cast<std::size_t>(b)] = mu;
    part.m2_[static_cast<std::size_t>(b)] = q;
  }
  merge(part);
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (other.bins() != bins()) throw Error(ErrorKind::kData, "merging accumulators of different widths");
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  for (std::size_t b = 0; b < mean_.size(); ++b) {
    const double delta = other.mean_[b] - mean_[b];
    mean_[b] = (na * mean_[b] + nb * other.mean_[b]) / n;
    m2_[b] += other.m2_[b] + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

NormStats MomentAccumulator::finish(const std::string& corpus_id, std::vector<int>* clamped_bins) const {
  if (count_ == 0) throw Error(ErrorKind::kData, "empty corpus");
  NormStats s;
  s.corpus_id = corpus_id;
  s.mean = mean_;
  s.std.resize(mean_.size());
  if (clamped_bins != nullptr) clamped_bins->clear();
  for (std::size_t b = 0; b < mean_.size(); ++b) {
    const double sd = std::sqrt(std::max(m2_[b], 0.0) / static_cast<double>(count_));
    if (!(sd >= kMinStd)) {
      s.std[b] = kMinStd;
      if (clamped_bins != nullptr) clamped_bins->push_back(static_cast<int>(b));
    } else {
      s.std[b] = sd;
    }
  }
  return s;
}

NormStats compute_norm_stats(std::span<const MelSpectrogram> corpus, const std::string& corpus_id,
                             std::vector<int>* clamped_bins) {
  if (corpus.empty()) throw Error(ErrorKind::kData, "empty corpus");
  MomentAccumulator acc(corpus.front().bins);
  for (const auto& mel : corpus) acc.add(mel);
  std::vector<int> clamped;
  NormStats s = acc.finish(corpus_id, &clamped);
  if (!clamped.empty())
    std::cerr << "warning: " << clamped.size() << " mel bin(s) of corpus '" << corpus_id
              << "' have near-zero variance; std clamped to " << kMinStd << '\n';
  if (clamped_bins != nullptr) *clamped_bins = std::move(clamped);
  return s;
}

MelSpectrogram normalize(const MelSpectrogram& mel, const NormStats& stats) {
  if (mel.normalized) throw Error(ErrorKind::kData, "spectrogram is already normalized");
  check_stats(mel, stats);
  MelSpectrogram out = mel;
  for (int b = 0; b < mel.bins; ++b) {
    const double mu = stats.mean[static_cast<std::size_t>(b)];
    const double sd = stats.std[static_cast<std::size_t>(b)];
    for (int t = 0; t < mel.frames; ++t) out.at(b, t) = static_cast<float>((mel.at(b, t) - mu) / sd);
  }
  out.normalized = true;
  return out;
}

MelSpectrogram denormalize(const MelSpectrogram& mel, const NormStats& stats) {
  if (!mel.normalized) throw Error(ErrorKind::kData, "spectrogram is not normalized");
  check_stats(mel, stats);
  MelSpectrogram out = mel;
  for (int b = 0; b < mel.bins; ++b) {
    const double mu = stats.mean[static_cast<std::size_t>(b)];
    const double sd = stats.std[static_cast<std::size_t>(b)];
    for (int t = 0; t < mel.frames; ++t) out.at(b, t) = static_cast<float>(mel.at(b, t) * sd + mu);
  }
  out.normalized = false;
  return out;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["corpus_id"] = stats.corpus_id;
  j["mean"] = stats.mean;
  j["std"] = stats.std;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

NormStats load_norm_stats(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  NormStats s;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
      throw Error(ErrorKind::kFormat, path.string() + ": unsupported norm stats version");
    s.corpus_id = j.at("corpus_id").get<std::string>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  if (s.mean.empty() || s.mean.size() != s.std.size())
    throw Error(ErrorKind::kFormat, path.string() + ": mean and std lengths differ");
  for (double v : s.std)
    if (!(v > 0) || !std::isfinite(v)) throw Error(ErrorKind::kFormat, path.string() + ": std must be positive");
  for (double v : s.mean)
    if (!std::isfinite(v)) throw Error(ErrorKind::kFormat, path.string() + ": non-finite mean");
  return s;
}

std::filesystem::path feature_header_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".hdr");
}

void save_features(const std::filesystem::path& path, const FeatureFile& f) {
  static_assert(std::endian::native == std::endian::little, "feature files are little-endian");
  const auto& m = f.mel;
  if (m.bins < 1 || m.frames < 1 || m.values.size() != static_cast<std::size_t>(m.bins) * m.frames)
    throw Error(ErrorKind::kData, "malformed spectrogram");
  for (char c : m.domain + f.norm_stats_id)
    if (c == '\n' || c == '\r') throw Error(ErrorKind::kData, "labels must be single-line");
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(m.values.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
  }
  std::ofstream hdr(feature_header_path(path), std::ios::trunc);
  if (!hdr) throw Error(ErrorKind::kIo, "cannot write " + feature_header_path(path).string());
  hdr << "format_version = " << kFeatureFormatVersion << '\n'
      << "bins = " << m.bins << '\n'
      << "frames = " << m.frames << '\n'
      << "domain = " << m.domain << '\n'
      << "normalized = " << (m.normalized ? 1 : 0) << '\n'
      << "norm_stats_id = " << f.norm_stats_id << '\n'
      << f.stft.to_text();
  if (!hdr) throw Error(ErrorKind::kIo, "short write to " + feature_header_path(path).string());
}

FeatureFile load_features(const std::filesystem::path& path) {
  const auto hdr_path = feature_header_path(path);
  const std::string text = read_text(hdr_path);
  auto bad = [&](const std::string& why) { throw Error(ErrorKind::kFormat, hdr_path.string() + ": " + why); };
  FeatureFile f;
  int version = -1;
  long long bins = -1, frames = -1;
  std::string stft_text;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad("malformed line: " + line);
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    auto integer = [&]() {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(val, &used);
        if (used != val.size()) bad("bad integer for " + key);
        return v;
      } catch (const std::logic_error&) {
        bad("bad integer for " + key);
      }
      return 0LL;
    };
    if (key == "format_version") version = static_cast<int>(integer());
    else if (key == "bins") bins = integer();
    else if (key == "frames") frames = integer();
    else if (key == "domain") f.mel.domain = val;
    else if (key == "normalized") f.mel.normalized = integer() != 0;
    else if (key == "norm_stats_id") f.norm_stats_id = val;
    else stft_text += line + '\n';
  }
  if (version != kFeatureFormatVersion) bad("unsupported format version " + std::to_string(version));
  if (bins < 1 || frames < 1) bad("missing or invalid dimensions");
  try {
    f.stft = StftConfig::parse_text(stft_text);
  } catch (const Error& e) {
    bad(e.what());
  }
  if (f.stft.mel_bins != bins) bad("bins disagree with the STFT config");
  f.mel.bins = static_cast<int>(bins);
  f.mel.frames = static_cast<int>(frames);
  const std::size_t n = static_cast<std::size_t>(bins) * static_cast<std::size_t>(frames);
  std::ifstream data(path, std::ios::binary | std::ios::ate);
  if (!data) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  const auto size = static_cast<std::size_t>(data.tellg());
  if (size != n * sizeof(float))
    throw Error(ErrorKind::kFormat, path.string() + ": expected " + std::to_string(n * sizeof(float)) +
                                        " bytes, found " + std::to_string(size));
  data.seekg(0);
  f.mel.values.resize(n);
  data.read(reinterpret_cast<char*>(f.mel.values.data()), static_cast<std::streamsize>(size));
  if (!data) throw Error(ErrorKind::kIo, "short read from " + path.string());
  for (float v : f.mel.values)
    if (!std::isfinite(v)) throw Error(ErrorKind::kFormat, path.string() + ": non-finite value");
  return f;
}

}  // namespace maskvc
