#pragma once

// Converter (2-1-2D CNN with gated linear units) and PatchGAN discriminator.
//
// Converter topology, F mel bins x T frames in, same out:
//   conv 5x15 + GLU
//   2 x [conv 5x5 stride 2, instance norm, GLU]        -> F/4 x T/4
//   flatten (channels x F/4 -> 1-D channels), 1x1 conv, instance norm
//   6 x residual [conv 1x3, IN, GLU, conv 1x3, IN, + skip]
//   1x1 conv, instance norm, unflatten
//   2 x [conv 5x5, pixel shuffle x2, instance norm, GLU]  -> F x T
//   conv 5x15 (linear)
// The only difference between the masked model and the CycleGAN-VC2 style
// baseline is the first conv's input width: 2 channels (spectrogram, mask)
// versus 1.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskvc/mask.hpp"
#include "maskvc/mel.hpp"
#include "maskvc/nn/network.hpp"

namespace maskvc {

enum class Preset { kFull, kDesk, kMicro };

std::string_view preset_name(Preset p);
Preset parse_preset(std::string_view name);

struct ConverterSpec {
  int in_channels = 2;  // 2: masked model, 1: baseline without mask input
  int mel_bins = 80;
  int conv_in = 128;
  int down1 = 256;
  int down2 = 128;
  int residual = 256;
  int residual_hidden = 512;
  int residual_blocks = 6;
  int up1 = 128;
  int up2 = 64;

  // Full widths divided by 8 for kDesk and by 64 for kMicro.
  static ConverterSpec for_preset(Preset preset, int mel_bins, int in_channels);
  bool operator==(const ConverterSpec&) const = default;
};

struct DiscriminatorSpec {
  int mel_bins = 80;
  int conv_in = 128;
  int block1 = 256;
  int block2 = 512;
  int block3 = 1024;
  // Leading blocks of {block1, block2, block3} in use; the micro preset keeps
  // one so its receptive field fits an 8 x 16 input.
  int strided_blocks = 3;
  bool instance_norm = true;

  static DiscriminatorSpec for_preset(Preset preset, int mel_bins);
  bool operator==(const DiscriminatorSpec&) const = default;
};

// Frequency and time axes must be multiples of this for the converter.
inline constexpr int kConverterStride = 4;
// Height (bins) and width (frames) of one patch score's receptive field.
// Inputs smaller than this are rejected.
struct ReceptiveField {
  int bins = 0;
  int frames = 0;
};
ReceptiveField receptive_field(const DiscriminatorSpec& spec);

nn::Network build_converter(const ConverterSpec& spec);
nn::Network build_discriminator(const DiscriminatorSpec& spec);

template <typename T>
struct Converter {
  ConverterSpec spec;
  nn::Network net;
  std::vector<T> params;
};

template <typename T>
struct Discriminator {
  DiscriminatorSpec spec;
  nn::Network net;
  std::vector<T> params;
};

using ConverterParams = Converter<float>;
using DiscriminatorParams = Discriminator<float>;

// Grid of per-patch realness scores, 1 x rows x cols.
using PatchScores = nn::Tensor<float>;

template <typename T>
Converter<T> make_converter(const ConverterSpec& spec, std::uint64_t seed);
template <typename T>
Discriminator<T> make_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

// Stacks (spectrogram, mask) as the converter input; the mask channel is
// dropped for single-channel converters.
template <typename T>
nn::Tensor<T> converter_input(std::span<const T> values, std::span<const T> mask, int bins,
                              int frames, int in_channels);

// Runs G on a masked spectrogram and its mask. Output has the input's dims.
MelSpectrogram converter_forward(const ConverterParams& g, const MaskedMel& x_hat,
                                 const Mask& m);

PatchScores discriminator_forward(const DiscriminatorParams& d, const MelSpectrogram& y);

template <typename T>
std::size_t count_params(const Converter<T>& g) {
  return g.params.size();
}
template <typename T>
std::size_t count_params(const Discriminator<T>& d) {
  return d.params.size();
}
std::size_t count_params(const nn::Network& net);

// Zeroes every first-layer weight reading the mask channel.
template <typename T>
void zero_mask_channel(Converter<T>& g);

// Copies a masked converter into a single-input converter with the same
// weights minus the mask-channel slice of the first conv.
template <typename T>
Converter<T> drop_mask_channel(const Converter<T>& g);

}  // namespace maskvc
