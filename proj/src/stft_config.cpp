#include <charconv>
#include <iomanip>
#include <limits>
#include <sstream>

#include "maskvc/error.hpp"
#include "maskvc/mel.hpp"

namespace maskvc {

void StftConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::kConfig, m); };
  if (sample_rate_hz <= 0) fail("sample rate must be positive");
  if (window_length < 2) fail("window_length must be >= 2");
  if (hop_length < 1 || hop_length > window_length) fail("hop_length must lie in [1, window_length]");
  if (mel_bins < 1) fail("mel_bins must be >= 1");
  if (!(fmin_hz >= 0) || !(fmin_hz < fmax_hz) || !(fmax_hz <= sample_rate_hz / 2.0))
    fail("filterbank bounds must satisfy 0 <= fmin < fmax <= sample_rate / 2");
  if (!(log_floor > 0)) fail("log_floor must be positive");
}

std::string StftConfig::to_text() const {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10)
     << "sample_rate_hz = " << sample_rate_hz << '\n'
     << "window_length = " << window_length << '\n'
     << "hop_length = " << hop_length << '\n'
     << "mel_bins = " << mel_bins << '\n'
     << "fmin_hz = " << fmin_hz << '\n'
     << "fmax_hz = " << fmax_hz << '\n'
     << "log_floor = " << log_floor << '\n';
  return os.str();
}

StftConfig StftConfig::parse_text(std::string_view text) {
  StftConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw Error(ErrorKind::kFormat, "malformed STFT line: " + line);
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = strip(line.substr(0, eq));
    const std::string val = strip(line.substr(eq + 1));
    auto num = [&](auto& out) {
      auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), out);
      if (ec != std::errc() || p != val.data() + val.size())
        throw Error(ErrorKind::kFormat, "bad value for " + key + ": " + val);
    };
    if (key == "sample_rate_hz") num(c.sample_rate_hz);
    else if (key == "window_length") num(c.window_length);
    else if (key == "hop_length") num(c.hop_length);
    else if (key == "mel_bins") num(c.mel_bins);
    else if (key == "fmin_hz") num(c.fmin_hz);
    else if (key == "fmax_hz") num(c.fmax_hz);
    else if (key == "log_floor") num(c.log_floor);
    else throw Error(ErrorKind::kFormat, "unknown STFT key " + key);
  }
  c.validate();
  return c;
}

}  // namespace maskvc
