#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "maskvc/error.hpp"
#include "maskvc/trainer.hpp"

namespace maskvc {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorKind::kConfig,
              "invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

template <typename I>
I to_int(std::string_view key, std::string_view v) {
  I out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfig, msg); };
  if (iterations < 0) fail("iterations must be >= 0");
  if (!(lr_g > 0) || !(lr_d > 0)) fail("learning rates must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    fail("Adam betas must lie in [0, 1)");
  if (batch_size != 1) fail("only batch_size = 1 is supported");
  if (crop_frames < kConverterStride || crop_frames % kConverterStride != 0)
    fail("crop_frames must be a positive multiple of 4");
  if (mel_bins < kConverterStride || mel_bins % kConverterStride != 0)
    fail("mel_bins must be a positive multiple of 4");
  const auto rf = receptive_field(DiscriminatorSpec::for_preset(preset, mel_bins));
  if (crop_frames < rf.frames || mel_bins < rf.bins)
    fail("crops of " + std::to_string(mel_bins) + "x" + std::to_string(crop_frames) +
         " are smaller than the discriminator's " + std::to_string(rf.bins) + "x" +
         std::to_string(rf.frames) + " receptive field");
  if (checkpoint_every < 1) fail("checkpoint_every must be >= 1");
  weights.validate();
  mask_policy.validate();
}

void TrainConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "format_version") {
    if (to_int<int>(key, v) != kConfigFormatVersion)
      throw Error(ErrorKind::kConfig, "unsupported config format_version " + std::string(v));
  } else if (key == "iterations") {
    iterations = to_int<std::int64_t>(key, v);
  } else if (key == "lr_g") {
    lr_g = to_double(key, v);
  } else if (key == "lr_d") {
    lr_d = to_double(key, v);
  } else if (key == "beta1") {
    beta1 = to_double(key, v);
  } else if (key == "beta2") {
    beta2 = to_double(key, v);
  } else if (key == "batch_size") {
    batch_size = to_int<int>(key, v);
  } else if (key == "crop_frames") {
    crop_frames = to_int<int>(key, v);
  } else if (key == "lambda_cyc") {
    weights.lambda_cyc = to_double(key, v);
  } else if (key == "lambda_id") {
    weights.lambda_id = to_double(key, v);
  } else if (key == "id_active_until") {
    weights.id_active_until = to_int<std::int64_t>(key, v);
  } else if (key == "mask_policy") {
    mask_policy = MaskPolicy::parse(v);
  } else if (key == "mask_input") {
    mask_input = to_bool(key, v);
  } else if (key == "seed") {
    seed = to_int<std::uint64_t>(key, v);
  } else if (key == "checkpoint_every") {
    checkpoint_every = to_int<std::int64_t>(key, v);
  } else if (key == "preset") {
    preset = parse_preset(v);
  } else if (key == "mel_bins") {
    mel_bins = to_int<int>(key, v);
  } else if (key == "update_discriminators") {
    update_discriminators = to_bool(key, v);
  } else {
    throw Error(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
  }
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << "format_version = " << kConfigFormatVersion << '\n'
     << "lr_g = " << fmt(lr_g) << '\n'
     << "lr_d = " << fmt(lr_d) << '\n'
     << "beta1 = " << fmt(beta1) << '\n'
     << "beta2 = " << fmt(beta2) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "crop_frames = " << crop_frames << '\n'
     << "lambda_cyc = " << fmt(weights.lambda_cyc) << '\n'
     << "lambda_id = " << fmt(weights.lambda_id) << '\n'
     << "id_active_until = " << weights.id_active_until << '\n'
     << "mask_policy = " << mask_policy.label() << '\n'
     << "mask_input = " << (mask_input ? "true" : "false") << '\n'
     << "seed = " << seed << '\n'
     << "preset = " << preset_name(preset) << '\n'
     << "mel_bins = " << mel_bins << '\n'
     << "update_discriminators = " << (update_discriminators ? "true" : "false") << '\n';
  return os.str();
}

std::string TrainConfig::to_ini() const {
  return canonical() + "iterations = " + std::to_string(iterations) +
         "\ncheckpoint_every = " + std::to_string(checkpoint_every) + "\n";
}

std::uint64_t TrainConfig::hash() const {
  // FNV-1a, 64-bit
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TrainConfig TrainConfig::parse_ini(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed config: ") + e.message() +
                                        " (line " + std::to_string(e.line()) + ")");
  }
  TrainConfig cfg;
  for (const auto& [key, node] : tree) {
    if (!node.empty())
      throw Error(ErrorKind::kConfig, "unexpected section [" + key + "] in training config");
    cfg.set(key, node.data());
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_ini(ss.str());
}

}  // namespace maskvc
