#pragma once

// A minimal sequential network engine with hand-written backward passes.
//
// A Network is a flat list of ops whose learnable scalars live in one
// contiguous parameter vector owned by the caller. Forward records every op
// input on a Tape; backward replays the tape in reverse, accumulating into a
// gradient vector with the same layout as the parameters. Residual
// connections are expressed with PushSkip / AddSkip markers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "maskvc/nn/tensor.hpp"

namespace maskvc::nn {

struct Conv {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  std::size_t weight_offset = 0;  // out x in x kh x kw
  std::size_t bias_offset = 0;    // out

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
  }
};

// Per-sample, per-channel normalization with affine scale/shift.
struct InstanceNorm {
  int channels = 0;
  std::size_t gamma_offset = 0;
  std::size_t beta_offset = 0;
  static constexpr double kEps = 1e-5;
};

// Splits channels in half: out = first * sigmoid(second).
struct Glu {};

// (C*r*r, H, W) -> (C, H*r, W*r).
struct PixelShuffle {
  int factor = 2;
};

// (C, H, W) -> (C*H, 1, W).
struct Flatten {};

// (C*H, 1, W) -> (C, H, W).
struct Unflatten {
  int channels = 0;
};

struct PushSkip {};
struct AddSkip {};

using Op = std::variant<Conv, InstanceNorm, Glu, PixelShuffle, Flatten, Unflatten, PushSkip,
                        AddSkip>;

std::string op_name(const Op& op);

struct Network {
  std::vector<Op> ops;
  std::size_t param_count = 0;
};

class NetworkBuilder {
 public:
  NetworkBuilder& conv(int in_c, int out_c, int kh, int kw, int sh = 1, int sw = 1, int ph = 0,
                       int pw = 0);
  NetworkBuilder& instance_norm(int channels);
  NetworkBuilder& glu();
  NetworkBuilder& pixel_shuffle(int factor);
  NetworkBuilder& flatten();
  NetworkBuilder& unflatten(int channels);
  NetworkBuilder& push_skip();
  NetworkBuilder& add_skip();
  Network build() const { return net_; }

 private:
  Network net_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) conv weights and biases, unit
// norm gains, zero norm shifts. Deterministic in `seed`.
template <typename T>
std::vector<T> init_params(const Network& net, std::uint64_t seed);

// Output shape for an input of the given shape; throws on incompatible dims.
void infer_shape(const Network& net, int& channels, int& height, int& width);

template <typename T>
struct Tape {
  std::vector<Tensor<T>> inputs;
};

// Runs the network. When `tape` is non-null every op input is recorded for a
// later backward pass. Throws Error(kNumeric) naming the op index if any
// activation becomes non-finite.
template <typename T>
Tensor<T> forward(const Network& net, std::span<const T> params, Tensor<T> input,
                  Tape<T>* tape);

// Backpropagates `grad` (dLoss/dOutput) through a recorded forward pass.
// Parameter gradients are accumulated into `param_grads` unless it is empty.
// Returns dLoss/dInput when `want_input_grad`, otherwise an empty tensor.
template <typename T>
Tensor<T> backward(const Network& net, std::span<const T> params, const Tape<T>& tape,
                   Tensor<T> grad, std::span<T> param_grads, bool want_input_grad);

}  // namespace maskvc::nn
