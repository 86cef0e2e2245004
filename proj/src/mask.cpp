#include "maskvc/mask.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "maskvc/error.hpp"

namespace maskvc {

std::string_view family_name(MaskFamily f) {
  switch (f) {
    case MaskFamily::kFif:
      return "FIF";
    case MaskFamily::kFifNs:
      return "FIF_NS";
    case MaskFamily::kFis:
      return "FIS";
    case MaskFamily::kFip:
      return "FIP";
  }
  return "?";
}

namespace {

std::string format_percent(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string MaskPolicy::label() const {
  std::string out(family_name(family));
  out += ' ';
  if (size_mode == SizeMode::kUniform) out += "0-";
  out += format_percent(x_percent);
  return out;
}

MaskPolicy MaskPolicy::parse(std::string_view text) {
  const auto fail = [&]() -> MaskPolicy {
    throw Error(ErrorKind::kConfig, "invalid mask policy '" + std::string(text) +
                                        "' (expected e.g. 'FIF 0-50' or 'FIS 25')");
  };
  std::istringstream is{std::string(text)};
  std::string fam;
  std::string size;
  std::string extra;
  if (!(is >> fam >> size) || (is >> extra)) return fail();
  MaskPolicy p;
  if (fam == "FIF") {
    p.family = MaskFamily::kFif;
  } else if (fam == "FIF_NS") {
    p.family = MaskFamily::kFifNs;
  } else if (fam == "FIS") {
    p.family = MaskFamily::kFis;
  } else if (fam == "FIP") {
    p.family = MaskFamily::kFip;
  } else {
    return fail();
  }
  std::string number = size;
  if (size.rfind("0-", 0) == 0 && size.size() > 2) {
    p.size_mode = SizeMode::kUniform;
    number = size.substr(2);
  } else {
    p.size_mode = SizeMode::kConstant;
  }
  try {
    std::size_t used = 0;
    p.x_percent = std::stod(number, &used);
    if (used != number.size()) return fail();
  } catch (const std::logic_error&) {
    return fail();
  }
  p.validate();
  return p;
}

void MaskPolicy::validate() const {
  if (!(x_percent >= 0.0 && x_percent <= 100.0))
    throw Error(ErrorKind::kConfig, "mask x_percent must lie in [0, 100]");
}

std::size_t Mask::zero_count() const {
  std::size_t n = 0;
  for (float v : values) n += v == 0.0f ? 1 : 0;
  return n;
}

int mask_extent(int extent, double percent) {
  return static_cast<int>(std::floor(extent * percent / 100.0 + 0.5));
}

Mask all_ones_mask(int bins, int frames) {
  if (bins < 1 || frames < 1) throw Error(ErrorKind::kData, "mask dims must be positive");
  Mask m;
  m.bins = bins;
  m.frames = frames;
  m.values.assign(static_cast<std::size_t>(bins) * frames, 1.0f);
  m.policy = MaskPolicy{MaskFamily::kFif, SizeMode::kConstant, 0.0};
  return m;
}

Mask sample_mask(const MaskPolicy& policy, int bins, int frames, Rng& rng) {
  policy.validate();
  Mask m = all_ones_mask(bins, frames);
  m.policy = policy;
  m.seed_trace = Rng(rng)();
  const double s =
      policy.size_mode == SizeMode::kConstant ? policy.x_percent : policy.x_percent * uniform01(rng);
  m.size_percent = s;
  auto zero_frame = [&m](int t) {
    for (int b = 0; b < m.bins; ++b) m.values[static_cast<std::size_t>(b) * m.frames + t] = 0.0f;
  };
  switch (policy.family) {
    case MaskFamily::kFif: {
      const int k = mask_extent(frames, s);
      m.zero_extent = k;
      if (k == 0) break;
      m.zero_start = static_cast<int>(uniform_int(rng, 0, frames - k));
      for (int t = m.zero_start; t < m.zero_start + k; ++t) zero_frame(t);
      break;
    }
    case MaskFamily::kFifNs: {
      const int k = mask_extent(frames, s);
      m.zero_extent = k;
      std::vector<int> order(static_cast<std::size_t>(frames));
      std::iota(order.begin(), order.end(), 0);
      for (int i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(uniform_int(rng, i, frames - 1));
        std::swap(order[static_cast<std::size_t>(i)], order[j]);
        zero_frame(order[static_cast<std::size_t>(i)]);
      }
      break;
    }
    case MaskFamily::kFis: {
      const int k = mask_extent(bins, s);
      m.zero_extent = k;
      if (k == 0) break;
      m.zero_start = static_cast<int>(uniform_int(rng, 0, bins - k));
      for (int b = m.zero_start; b < m.zero_start + k; ++b)
        for (int t = 0; t < frames; ++t) m.values[static_cast<std::size_t>(b) * frames + t] = 0.0f;
      break;
    }
    case MaskFamily::kFip: {
      const double p = s / 100.0;
      for (float& v : m.values)
        if (uniform01(rng) < p) v = 0.0f;
      m.zero_extent = static_cast<int>(m.zero_count());
      break;
    }
  }
  return m;
}

Mask sample_mask(const MaskPolicy& policy, int bins, int frames, std::uint64_t seed) {
  Rng rng(seed);
  Mask m = sample_mask(policy, bins, frames, rng);
  m.seed_trace = seed;
  return m;
}

MaskedMel apply_mask(const MelSpectrogram& x, const Mask& m) {
  if (x.bins != m.bins || x.frames != m.frames) {
    throw Error(ErrorKind::kData, "mask dims " + std::to_string(m.bins) + "x" +
                                      std::to_string(m.frames) + " do not match spectrogram " +
                                      std::to_string(x.bins) + "x" + std::to_string(x.frames));
  }
  MaskedMel out;
  out.bins = x.bins;
  out.frames = x.frames;
  out.values.resize(x.values.size());
  for (std::size_t i = 0; i < x.values.size(); ++i) out.values[i] = x.values[i] * m.values[i];
  out.source_mask = m;
  return out;
}

}  // namespace maskvc
