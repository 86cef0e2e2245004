#include "maskvc/models.hpp"

#include <algorithm>

#include "maskvc/error.hpp"

namespace maskvc {

std::string_view preset_name(Preset p) {
  switch (p) {
    case Preset::kFull:
      return "full";
    case Preset::kDesk:
      return "desk";
    case Preset::kMicro:
      return "micro";
  }
  return "?";
}

Preset parse_preset(std::string_view name) {
  if (name == "full") return Preset::kFull;
  if (name == "desk") return Preset::kDesk;
  if (name == "micro") return Preset::kMicro;
  throw Error(ErrorKind::kConfig, "unknown preset '" + std::string(name) + "'");
}

namespace {

int divisor(Preset p) {
  switch (p) {
    case Preset::kFull:
      return 1;
    case Preset::kDesk:
      return 8;
    case Preset::kMicro:
      return 64;
  }
  return 1;
}

int scaled(int width, int div) { return std::max(1, width / div); }

}  // namespace

ConverterSpec ConverterSpec::for_preset(Preset preset, int mel_bins, int in_channels) {
  if (in_channels != 1 && in_channels != 2)
    throw Error(ErrorKind::kConfig, "converter input channels must be 1 or 2");
  if (mel_bins < kConverterStride || mel_bins % kConverterStride != 0)
    throw Error(ErrorKind::kConfig, "mel_bins must be a positive multiple of 4");
  ConverterSpec s;
  const int d = divisor(preset);
  s.in_channels = in_channels;
  s.mel_bins = mel_bins;
  s.conv_in = scaled(s.conv_in, d);
  s.down1 = scaled(s.down1, d);
  s.down2 = scaled(s.down2, d);
  s.residual = scaled(s.residual, d);
  s.residual_hidden = scaled(s.residual_hidden, d);
  s.up1 = scaled(s.up1, d);
  s.up2 = scaled(s.up2, d);
  return s;
}

DiscriminatorSpec DiscriminatorSpec::for_preset(Preset preset, int mel_bins) {
  DiscriminatorSpec s;
  const int d = divisor(preset);
  s.mel_bins = mel_bins;
  s.conv_in = scaled(s.conv_in, d);
  s.block1 = scaled(s.block1, d);
  s.block2 = scaled(s.block2, d);
  s.block3 = scaled(s.block3, d);
  if (preset == Preset::kMicro) s.strided_blocks = 1;
  return s;
}

nn::Network build_converter(const ConverterSpec& s) {
  const int flat = s.down2 * (s.mel_bins / kConverterStride);
  nn::NetworkBuilder b;
  b.conv(s.in_channels, 2 * s.conv_in, 5, 15, 1, 1, 2, 7).glu();
  b.conv(s.conv_in, 2 * s.down1, 5, 5, 2, 2, 2, 2).instance_norm(2 * s.down1).glu();
  b.conv(s.down1, 2 * s.down2, 5, 5, 2, 2, 2, 2).instance_norm(2 * s.down2).glu();
  b.flatten().conv(flat, s.residual, 1, 1).instance_norm(s.residual);
  for (int i = 0; i < s.residual_blocks; ++i) {
    b.push_skip();
    b.conv(s.residual, 2 * s.residual_hidden, 1, 3, 1, 1, 0, 1)
        .instance_norm(2 * s.residual_hidden)
        .glu();
    b.conv(s.residual_hidden, s.residual, 1, 3, 1, 1, 0, 1).instance_norm(s.residual);
    b.add_skip();
  }
  b.conv(s.residual, flat, 1, 1).instance_norm(flat).unflatten(s.down2);
  b.conv(s.down2, 2 * 4 * s.up1, 5, 5, 1, 1, 2, 2).pixel_shuffle(2).instance_norm(2 * s.up1).glu();
  b.conv(s.up1, 2 * 4 * s.up2, 5, 5, 1, 1, 2, 2).pixel_shuffle(2).instance_norm(2 * s.up2).glu();
  b.conv(s.up2, 1, 5, 15, 1, 1, 2, 7);
  return b.build();
}

nn::Network build_discriminator(const DiscriminatorSpec& s) {
  nn::NetworkBuilder b;
  b.conv(1, 2 * s.conv_in, 3, 3, 1, 1, 1, 1).glu();
  if (s.strided_blocks < 1 || s.strided_blocks > 3)
    throw Error(ErrorKind::kConfig, "discriminator needs 1 to 3 strided blocks");
  const int widths[] = {s.block1, s.block2, s.block3};
  int in = s.conv_in;
  for (int i = 0; i < s.strided_blocks; ++i) {
    const int width = widths[i];
    b.conv(in, 2 * width, 3, 3, 2, 2, 1, 1);
    if (s.instance_norm) b.instance_norm(2 * width);
    b.glu();
    in = width;
  }
  b.conv(in, 1, 1, 3, 1, 1, 0, 1);
  return b.build();
}

ReceptiveField receptive_field(const DiscriminatorSpec& s) {
  // 3x3 input conv, 3x3 stride-2 blocks, then a 1x3 output conv.
  int r = 3;
  int jump = 1;
  for (int i = 0; i < s.strided_blocks; ++i) {
    r += 2 * jump;
    jump *= 2;
  }
  return {r, r + 2 * jump};
}

std::size_t count_params(const nn::Network& net) { return net.param_count; }

template <typename T>
Converter<T> make_converter(const ConverterSpec& spec, std::uint64_t seed) {
  Converter<T> g{spec, build_converter(spec), {}};
  g.params = nn::init_params<T>(g.net, seed);
  return g;
}

template <typename T>
Discriminator<T> make_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  Discriminator<T> d{spec, build_discriminator(spec), {}};
  d.params = nn::init_params<T>(d.net, seed);
  return d;
}

template <typename T>
nn::Tensor<T> converter_input(std::span<const T> values, std::span<const T> mask, int bins,
                              int frames, int in_channels) {
  nn::Tensor<T> in(in_channels, bins, frames);
  std::copy(values.begin(), values.end(), in.data.begin());
  if (in_channels == 2) std::copy(mask.begin(), mask.end(), in.data.begin() + values.size());
  return in;
}

namespace {

void check_converter_dims(const ConverterSpec& spec, int bins, int frames) {
  if (bins != spec.mel_bins)
    throw Error(ErrorKind::kData, "converter expects " + std::to_string(spec.mel_bins) +
                                      " mel bins, got " + std::to_string(bins));
  if (frames < kConverterStride || frames % kConverterStride != 0)
    throw Error(ErrorKind::kData, "converter input frames (" + std::to_string(frames) +
                                      ") must be a positive multiple of 4");
}

}  // namespace

MelSpectrogram converter_forward(const ConverterParams& g, const MaskedMel& x_hat,
                                 const Mask& m) {
  if (x_hat.bins != m.bins || x_hat.frames != m.frames)
    throw Error(ErrorKind::kData, "masked spectrogram and mask dims differ");
  check_converter_dims(g.spec, x_hat.bins, x_hat.frames);
  auto in = converter_input<float>(x_hat.values, m.values, x_hat.bins, x_hat.frames,
                                   g.spec.in_channels);
  auto out = nn::forward<float>(g.net, g.params, std::move(in), nullptr);
  MelSpectrogram y(x_hat.bins, x_hat.frames);
  y.values = std::move(out.data);
  y.normalized = true;
  return y;
}

PatchScores discriminator_forward(const DiscriminatorParams& d, const MelSpectrogram& y) {
  const auto rf = receptive_field(d.spec);
  if (y.bins < rf.bins || y.frames < rf.frames)
    throw Error(ErrorKind::kData, "discriminator input " + std::to_string(y.bins) + "x" +
                                      std::to_string(y.frames) + " is smaller than its " +
                                      std::to_string(rf.bins) + "x" + std::to_string(rf.frames) +
                                      " receptive field");
  nn::Tensor<float> in(1, y.bins, y.frames);
  in.data = y.values;
  return nn::forward<float>(d.net, d.params, std::move(in), nullptr);
}

template <typename T>
void zero_mask_channel(Converter<T>& g) {
  if (g.spec.in_channels != 2) return;
  const auto& first = std::get<nn::Conv>(g.net.ops.front());
  const std::size_t per_in = static_cast<std::size_t>(first.kernel_h) * first.kernel_w;
  for (int o = 0; o < first.out_channels; ++o) {
    T* w = g.params.data() + first.weight_offset + (static_cast<std::size_t>(o) * 2 + 1) * per_in;
    std::fill(w, w + per_in, T(0));
  }
}

template <typename T>
Converter<T> drop_mask_channel(const Converter<T>& g) {
  if (g.spec.in_channels != 2)
    throw Error(ErrorKind::kData, "converter has no mask channel to drop");
  ConverterSpec spec = g.spec;
  spec.in_channels = 1;
  Converter<T> out{spec, build_converter(spec), {}};
  out.params.resize(out.net.param_count);
  const auto& src = std::get<nn::Conv>(g.net.ops.front());
  const auto& dst = std::get<nn::Conv>(out.net.ops.front());
  const std::size_t per_in = static_cast<std::size_t>(src.kernel_h) * src.kernel_w;
  for (int o = 0; o < src.out_channels; ++o) {
    const T* w = g.params.data() + src.weight_offset + static_cast<std::size_t>(o) * 2 * per_in;
    std::copy(w, w + per_in, out.params.begin() + dst.weight_offset + o * per_in);
  }
  std::copy(g.params.begin() + src.bias_offset, g.params.begin() + src.bias_offset + src.out_channels,
            out.params.begin() + dst.bias_offset);
  // Everything after the first conv has an identical layout, shifted by the
  // removed weight slice.
  const std::size_t src_rest = src.bias_offset + src.out_channels;
  const std::size_t dst_rest = dst.bias_offset + dst.out_channels;
  std::copy(g.params.begin() + src_rest, g.params.end(), out.params.begin() + dst_rest);
  return out;
}

template Converter<float> make_converter<float>(const ConverterSpec&, std::uint64_t);
template Converter<double> make_converter<double>(const ConverterSpec&, std::uint64_t);
template Discriminator<float> make_discriminator<float>(const DiscriminatorSpec&, std::uint64_t);
template Discriminator<double> make_discriminator<double>(const DiscriminatorSpec&,
                                                          std::uint64_t);
template nn::Tensor<float> converter_input<float>(std::span<const float>, std::span<const float>,
                                                  int, int, int);
template nn::Tensor<double> converter_input<double>(std::span<const double>,
                                                    std::span<const double>, int, int, int);
template void zero_mask_channel<float>(Converter<float>&);
template void zero_mask_channel<double>(Converter<double>&);
template Converter<float> drop_mask_channel<float>(const Converter<float>&);
template Converter<double> drop_mask_channel<double>(const Converter<double>&);

}  // namespace maskvc
