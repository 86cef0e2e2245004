#include "maskvc/runtime.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "maskvc/error.hpp"

namespace maskvc {
namespace {

const ConverterParams& converter_for(const Checkpoint& ck, Direction dir) {
  return dir == Direction::kXY ? ck.state.nets.g_xy : ck.state.nets.g_yx;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + '"';
}

}  // namespace

Direction parse_direction(std::string_view s) {
  if (s == "xy") return Direction::kXY;
  if (s == "yx") return Direction::kYX;
  throw Error(ErrorKind::kUsage, "direction must be xy or yx, got '" + std::string(s) + "'");
}

std::string_view direction_name(Direction d) { return d == Direction::kXY ? "xy" : "yx"; }

MelSpectrogram convert_normalized(const ConverterParams& g, const MelSpectrogram& mel) {
  if (!mel.normalized) throw Error(ErrorKind::kData, "conversion input must be normalized");
  if (mel.frames < kMinConvertFrames)
    throw Error(ErrorKind::kData, "utterance of " + std::to_string(mel.frames) +
                                      " frames is shorter than the minimum of " +
                                      std::to_string(kMinConvertFrames));
  const int T = mel.frames;
  const int padded = (T + kConverterStride - 1) / kConverterStride * kConverterStride;
  // Reflect (edge excluded) into the tail; padded - T <= 3 < T.
  MelSpectrogram in(mel.bins, padded);
  for (int b = 0; b < mel.bins; ++b)
    for (int t = 0; t < padded; ++t) in.at(b, t) = mel.at(b, t < T ? t : 2 * (T - 1) - t);
  in.normalized = true;
  const Mask ones = all_ones_mask(mel.bins, padded);
  MaskedMel masked = apply_mask(in, ones);
  const MelSpectrogram full = converter_forward(g, masked, ones);
  MelSpectrogram out(mel.bins, T);
  for (int b = 0; b < mel.bins; ++b)
    std::copy_n(full.values.begin() + static_cast<std::ptrdiff_t>(b) * padded, T,
                out.values.begin() + static_cast<std::ptrdiff_t>(b) * T);
  out.normalized = true;
  return out;
}

MelSpectrogram convert(const Checkpoint& ck, const MelSpectrogram& mel, Direction dir) {
  const NormStats& target = dir == Direction::kXY ? ck.stats_y : ck.stats_x;
  MelSpectrogram out = denormalize(convert_normalized(converter_for(ck, dir), mel), target);
  out.domain = dir == Direction::kXY ? "Y" : "X";
  return out;
}

std::size_t ConversionReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const ConversionRow& r) { return !r.ok; }));
}

std::string ConversionReport::csv() const {
  std::ostringstream os;
  os << "file,status,frames,error\n";
  for (const auto& r : rows)
    os << csv_field(r.file) << ',' << (r.ok ? "ok" : "failed") << ',' << r.frames << ','
       << csv_field(r.error) << '\n';
  return os.str();
}

ConversionReport convert_corpus(const Checkpoint& ck, const std::filesystem::path& dir_in,
                                const std::filesystem::path& dir_out, Direction dir,
                                const ConvertOptions& opt) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir_in)) throw Error(ErrorKind::kIo, "not a directory: " + dir_in.string());
  std::vector<fs::path> inputs;
  for (const auto& e : fs::directory_iterator(dir_in))
    if (e.is_regular_file() && e.path().extension() == ".f32") inputs.push_back(e.path());
  if (inputs.empty()) throw Error(ErrorKind::kData, "no feature files (*.f32) in " + dir_in.string());
  std::sort(inputs.begin(), inputs.end());
  fs::create_directories(dir_out);
  const NormStats& source = dir == Direction::kXY ? ck.stats_x : ck.stats_y;

  ConversionReport report;
  for (const auto& path : inputs) {
    ConversionRow row;
    row.file = path.filename().string();
    try {
      FeatureFile f = load_features(path);
      if (!(f.stft == ck.stft))
        throw Error(ErrorKind::kConfig, "STFT settings differ from the checkpoint's");
      MelSpectrogram mel = f.mel.normalized ? f.mel : normalize(f.mel, source);
      FeatureFile out{convert(ck, mel, dir), ck.stft, ""};
      save_features(dir_out / path.filename(), out);
      if (opt.write_wav) {
        const auto wav = griffin_lim_audition(out.mel, ck.stft, opt.griffin_lim_iterations, opt.seed);
        save_waveform(dir_out / path.filename().replace_extension(".wav"), wav);
      }
      row.ok = true;
      row.frames = out.mel.frames;
    } catch (const Error& e) {
      row.error = std::string(error_class(e.kind())) + ": " + e.what();
    }
    report.rows.push_back(std::move(row));
  }
  std::ofstream(dir_out / "report.csv", std::ios::trunc) << report.csv();
  return report;
}

}  // namespace maskvc
