#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "maskvc/error.hpp"
#include "maskvc/features.hpp"

namespace maskvc {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Waveform load_waveform(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  const std::vector<char> buf{std::istreambuf_iterator<char>(in), {}};
  const std::string name = path.string();
  auto bad = [&](const std::string& why) { throw Error(ErrorKind::kFormat, name + ": " + why); };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    bad("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_pos = 0, data_size = 0;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id(buf.data() + pos, 4);
    const auto size = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + size > buf.size()) bad("truncated fmt chunk");
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) {
        if (size < 26) bad("truncated extensible fmt chunk");
        format = read_le<std::uint16_t>(buf, body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (id == "data") {
      data_pos = body;
      data_size = std::min<std::size_t>(size, buf.size() - body);
      have_data = true;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) bad("missing fmt chunk");
  if (!have_data) bad("missing data chunk");
  if (channels != 1) bad("non-mono input (" + std::to_string(channels) + " channels)");
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    bad("unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
        " bits); expected 16-bit PCM or 32-bit float");
  if (rate == 0) bad("zero sample rate");

  Waveform wav;
  wav.sample_rate_hz = static_cast<int>(rate);
  const std::size_t width = bits / 8;
  const std::size_t n = data_size / width;
  if (n == 0) throw Error(ErrorKind::kData, name + ": no samples");
  wav.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = data_pos + i * width;
    if (pcm16) {
      wav.samples[i] = static_cast<float>(read_le<std::int16_t>(buf, at)) / 32768.0f;
    } else {
      const float v = read_le<float>(buf, at);
      if (!std::isfinite(v)) throw Error(ErrorKind::kData, name + ": non-finite sample");
      wav.samples[i] = v;
    }
  }
  return wav;
}

void save_waveform(const std::filesystem::path& path, const Waveform& wav, WavEncoding encoding) {
  if (wav.sample_rate_hz <= 0) throw Error(ErrorKind::kData, "sample rate must be positive");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wav.samples.size() * (bits / 8));
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(wav.sample_rate_hz));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(wav.sample_rate_hz) * (bits / 8));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(bits / 8));
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (float s : wav.samples) {
    if (pcm) {
      const float c = std::clamp(s, -1.0f, 1.0f);
      write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lrint(std::min(c * 32768.0f, 32767.0f))));
    } else {
      write_le<float>(out, s);
    }
  }
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

Waveform resample(const Waveform& wav, int target_rate_hz) {
  if (target_rate_hz <= 0 || wav.sample_rate_hz <= 0)
    throw Error(ErrorKind::kData, "sample rates must be positive");
  if (target_rate_hz == wav.sample_rate_hz) return wav;
  const double ratio = static_cast<double>(target_rate_hz) / wav.sample_rate_hz;
  const double cutoff = std::min(1.0, ratio);  // anti-alias when downsampling
  constexpr int kZeroCrossings = 16;
  const double half = kZeroCrossings / cutoff;
  const auto n_in = static_cast<std::int64_t>(wav.samples.size());
  const auto n_out = static_cast<std::int64_t>(std::floor(n_in * ratio));
  Waveform out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<std::size_t>(std::max<std::int64_t>(n_out, 1)));
  constexpr double kPi = 3.14159265358979323846;
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(out.samples.size()); ++j) {
    const double t = j / ratio;
    const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(t - half)));
    const auto hi = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::floor(t + half)));
    double acc = 0;
    for (std::int64_t i = lo; i <= hi; ++i) {
      const double d = t - static_cast<double>(i);
      const double x = cutoff * d;
      const double sinc = x == 0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
      const double w = 0.5 + 0.5 * std::cos(kPi * d / half);
      acc += wav.samples[static_cast<std::size_t>(i)] * cutoff * sinc * w;
    }
    out.samples[static_cast<std::size_t>(j)] = static_cast<float>(acc);
  }
  return out;
}

Waveform conform_rate(const Waveform& wav, int rate_hz, bool allow_resample) {
  if (wav.sample_rate_hz == rate_hz) return wav;
  if (!allow_resample)
    throw Error(ErrorKind::kData, "sample rate " + std::to_string(wav.sample_rate_hz) +
                                      " Hz differs from the configured " +
                                      std::to_string(rate_hz) + " Hz (pass --resample)");
  return resample(wav, rate_hz);
}

}  // namespace maskvc
