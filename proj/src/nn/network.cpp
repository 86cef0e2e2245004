#include "maskvc/nn/network.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <random>
#include <string>
#include <type_traits>

#include "maskvc/error.hpp"
#include "maskvc/kernels/kernels.hpp"

namespace maskvc::nn {

using kernels::Trans;

std::string op_name(const Op& op) {
  struct Visitor {
    std::string operator()(const Conv& c) const {
      return "conv" + std::to_string(c.kernel_h) + "x" + std::to_string(c.kernel_w) + "(" +
             std::to_string(c.in_channels) + "->" + std::to_string(c.out_channels) + ")";
    }
    std::string operator()(const InstanceNorm&) const { return "instance_norm"; }
    std::string operator()(const Glu&) const { return "glu"; }
    std::string operator()(const PixelShuffle&) const { return "pixel_shuffle"; }
    std::string operator()(const Flatten&) const { return "flatten"; }
    std::string operator()(const Unflatten&) const { return "unflatten"; }
    std::string operator()(const PushSkip&) const { return "push_skip"; }
    std::string operator()(const AddSkip&) const { return "add_skip"; }
  };
  return std::visit(Visitor{}, op);
}

NetworkBuilder& NetworkBuilder::conv(int in_c, int out_c, int kh, int kw, int sh, int sw, int ph,
                                     int pw) {
  Conv c{in_c, out_c, kh, kw, sh, sw, ph, pw};
  c.weight_offset = net_.param_count;
  net_.param_count += c.weight_count();
  c.bias_offset = net_.param_count;
  net_.param_count += static_cast<std::size_t>(out_c);
  net_.ops.emplace_back(c);
  return *this;
}

NetworkBuilder& NetworkBuilder::instance_norm(int channels) {
  InstanceNorm n{channels};
  n.gamma_offset = net_.param_count;
  n.beta_offset = net_.param_count + static_cast<std::size_t>(channels);
  net_.param_count += 2 * static_cast<std::size_t>(channels);
  net_.ops.emplace_back(n);
  return *this;
}

NetworkBuilder& NetworkBuilder::glu() {
  net_.ops.emplace_back(Glu{});
  return *this;
}

NetworkBuilder& NetworkBuilder::pixel_shuffle(int factor) {
  net_.ops.emplace_back(PixelShuffle{factor});
  return *this;
}

NetworkBuilder& NetworkBuilder::flatten() {
  net_.ops.emplace_back(Flatten{});
  return *this;
}

NetworkBuilder& NetworkBuilder::unflatten(int channels) {
  net_.ops.emplace_back(Unflatten{channels});
  return *this;
}

NetworkBuilder& NetworkBuilder::push_skip() {
  net_.ops.emplace_back(PushSkip{});
  return *this;
}

NetworkBuilder& NetworkBuilder::add_skip() {
  net_.ops.emplace_back(AddSkip{});
  return *this;
}

template <typename T>
std::vector<T> init_params(const Network& net, std::uint64_t seed) {
  std::vector<T> params(net.param_count, T(0));
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double bound) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return static_cast<T>((2.0 * u - 1.0) * bound);
  };
  for (const Op& op : net.ops) {
    if (const auto* c = std::get_if<Conv>(&op)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(c->in_channels) * c->kernel_h *
                                           c->kernel_w);
      for (std::size_t i = 0; i < c->weight_count(); ++i)
        params[c->weight_offset + i] = uniform(bound);
      for (int i = 0; i < c->out_channels; ++i) params[c->bias_offset + i] = uniform(bound);
    } else if (const auto* n = std::get_if<InstanceNorm>(&op)) {
      for (int i = 0; i < n->channels; ++i) params[n->gamma_offset + i] = T(1);
    }
  }
  return params;
}

namespace {

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

[[noreturn]] void shape_error(std::size_t index, const Op& op, const std::string& why) {
  throw Error(ErrorKind::kData,
              "op " + std::to_string(index) + " (" + op_name(op) + "): " + why);
}

void infer_op(std::size_t index, const Op& op, int& c, int& h, int& w, int& skips) {
  if (const auto* cv = std::get_if<Conv>(&op)) {
    if (c != cv->in_channels)
      shape_error(index, op, "expected " + std::to_string(cv->in_channels) +
                                 " input channels, got " + std::to_string(c));
    const int oh = conv_out(h, cv->kernel_h, cv->stride_h, cv->pad_h);
    const int ow = conv_out(w, cv->kernel_w, cv->stride_w, cv->pad_w);
    if (oh < 1 || ow < 1) shape_error(index, op, "input smaller than kernel");
    c = cv->out_channels;
    h = oh;
    w = ow;
  } else if (const auto* n = std::get_if<InstanceNorm>(&op)) {
    if (c != n->channels) shape_error(index, op, "channel mismatch");
  } else if (std::holds_alternative<Glu>(op)) {
    if (c % 2 != 0) shape_error(index, op, "odd channel count");
    c /= 2;
  } else if (const auto* ps = std::get_if<PixelShuffle>(&op)) {
    const int rr = ps->factor * ps->factor;
    if (c % rr != 0) shape_error(index, op, "channels not divisible by factor^2");
    c /= rr;
    h *= ps->factor;
    w *= ps->factor;
  } else if (std::holds_alternative<Flatten>(op)) {
    c *= h;
    h = 1;
  } else if (const auto* u = std::get_if<Unflatten>(&op)) {
    if (h != 1 || c % u->channels != 0) shape_error(index, op, "not a flattened tensor");
    h = c / u->channels;
    c = u->channels;
  } else if (std::holds_alternative<PushSkip>(op)) {
    ++skips;
  } else if (std::holds_alternative<AddSkip>(op)) {
    if (skips-- <= 0) shape_error(index, op, "no matching push_skip");
  }
}

// Output columns q with 0 <= q*stride - pad + k < width, as [lo, hi).
std::pair<int, int> valid_columns(int width, int out, int stride, int pad, int k) {
  const int off = pad - k;
  const int lo = off <= 0 ? 0 : (off + stride - 1) / stride;
  const int top = width - 1 + off;
  const int hi = top < 0 ? 0 : top / stride + 1;
  return {std::min(lo, out), std::clamp(hi, std::min(lo, out), out)};
}

// cols is (in_c*kh*kw) x (oh*ow).
template <typename T>
void im2col(const Tensor<T>& x, const Conv& cv, int oh, int ow, T* cols) {
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < cv.in_channels; ++c) {
    for (int ki = 0; ki < cv.kernel_h; ++ki) {
      for (int kj = 0; kj < cv.kernel_w; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(c) * cv.kernel_h + ki) * cv.kernel_w + kj) * n;
        for (int r = 0; r < oh; ++r) {
          T* dst = row + static_cast<std::size_t>(r) * ow;
          const int ih = r * cv.stride_h - cv.pad_h + ki;
          if (ih < 0 || ih >= x.height) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = x.data.data() + (static_cast<std::size_t>(c) * x.height + ih) * x.width;
          const auto [lo, hi] = valid_columns(x.width, ow, cv.stride_w, cv.pad_w, kj);
          std::fill(dst, dst + lo, T(0));
          if (cv.stride_w == 1) {
            std::copy(src + lo - cv.pad_w + kj, src + hi - cv.pad_w + kj, dst + lo);
          } else {
            const T* s = src + lo * cv.stride_w - cv.pad_w + kj;
            for (int q = lo; q < hi; ++q, s += cv.stride_w) dst[q] = *s;
          }
          std::fill(dst + hi, dst + ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const Conv& cv, int oh, int ow, Tensor<T>& dx) {
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < cv.in_channels; ++c) {
    for (int ki = 0; ki < cv.kernel_h; ++ki) {
      for (int kj = 0; kj < cv.kernel_w; ++kj) {
        const T* row =
            cols + ((static_cast<std::size_t>(c) * cv.kernel_h + ki) * cv.kernel_w + kj) * n;
        for (int r = 0; r < oh; ++r) {
          const int ih = r * cv.stride_h - cv.pad_h + ki;
          if (ih < 0 || ih >= dx.height) continue;
          const T* src = row + static_cast<std::size_t>(r) * ow;
          T* dst = dx.data.data() + (static_cast<std::size_t>(c) * dx.height + ih) * dx.width;
          const auto [lo, hi] = valid_columns(dx.width, ow, cv.stride_w, cv.pad_w, kj);
          T* d = dst + lo * cv.stride_w - cv.pad_w + kj;
          if (cv.stride_w == 1) {
            for (int q = lo; q < hi; ++q) d[q - lo] += src[q];
          } else {
            for (int q = lo; q < hi; ++q, d += cv.stride_w) *d += src[q];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Conv& cv) {
  return cv.kernel_h == 1 && cv.kernel_w == 1 && cv.stride_h == 1 && cv.stride_w == 1 &&
         cv.pad_h == 0 && cv.pad_w == 0;
}

template <typename T>
Tensor<T> conv_forward(const Conv& cv, std::span<const T> params, const Tensor<T>& x) {
  const int oh = conv_out(x.height, cv.kernel_h, cv.stride_h, cv.pad_h);
  const int ow = conv_out(x.width, cv.kernel_w, cv.stride_w, cv.pad_w);
  Tensor<T> out(cv.out_channels, oh, ow);
  const int n = oh * ow;
  const int k = cv.in_channels * cv.kernel_h * cv.kernel_w;
  const T* w = params.data() + cv.weight_offset;
  if (is_pointwise(cv)) {
    kernels::gemm<T>(Trans::kNo, Trans::kNo, cv.out_channels, n, k, T(1), w, k, x.data.data(), n,
                     T(0), out.data.data(), n);
  } else {
    std::vector<T> cols(static_cast<std::size_t>(k) * n);
    im2col(x, cv, oh, ow, cols.data());
    kernels::gemm<T>(Trans::kNo, Trans::kNo, cv.out_channels, n, k, T(1), w, k, cols.data(), n,
                     T(0), out.data.data(), n);
  }
  const T* bias = params.data() + cv.bias_offset;
  for (int c = 0; c < cv.out_channels; ++c)
    for (T& v : out.plane(c)) v += bias[c];
  return out;
}

template <typename T>
Tensor<T> conv_backward(const Conv& cv, std::span<const T> params, const Tensor<T>& x,
                        const Tensor<T>& g, std::span<T> grads, bool want_input_grad) {
  const int oh = g.height;
  const int ow = g.width;
  const int n = oh * ow;
  const int k = cv.in_channels * cv.kernel_h * cv.kernel_w;
  const bool pointwise = is_pointwise(cv);
  if (!grads.empty()) {
    std::vector<T> cols;
    const T* colp = x.data.data();
    if (!pointwise) {
      cols.resize(static_cast<std::size_t>(k) * n);
      im2col(x, cv, oh, ow, cols.data());
      colp = cols.data();
    }
    kernels::gemm<T>(Trans::kNo, Trans::kYes, cv.out_channels, k, n, T(1), g.data.data(), n, colp,
                     n, T(1), grads.data() + cv.weight_offset, k);
    T* db = grads.data() + cv.bias_offset;
    for (int c = 0; c < cv.out_channels; ++c) {
      T acc = 0;
      for (T v : g.plane(c)) acc += v;
      db[c] += acc;
    }
  }
  if (!want_input_grad) return {};
  Tensor<T> dx(x.channels, x.height, x.width);
  const T* w = params.data() + cv.weight_offset;
  if (pointwise) {
    kernels::gemm<T>(Trans::kYes, Trans::kNo, k, n, cv.out_channels, T(1), w, k, g.data.data(), n,
                     T(0), dx.data.data(), n);
  } else {
    std::vector<T> dcols(static_cast<std::size_t>(k) * n);
    kernels::gemm<T>(Trans::kYes, Trans::kNo, k, n, cv.out_channels, T(1), w, k, g.data.data(),
                     n, T(0), dcols.data(), n);
    col2im(dcols.data(), cv, oh, ow, dx);
  }
  return dx;
}

template <typename T>
void channel_moments(std::span<const T> plane, double& mean, double& inv_std) {
  double sum = 0;
  for (T v : plane) sum += v;
  mean = sum / static_cast<double>(plane.size());
  double sq = 0;
  for (T v : plane) {
    const double d = v - mean;
    sq += d * d;
  }
  const double var = sq / static_cast<double>(plane.size());
  inv_std = 1.0 / std::sqrt(var + InstanceNorm::kEps);
}

template <typename T>
Tensor<T> norm_forward(const InstanceNorm& nm, std::span<const T> params, const Tensor<T>& x) {
  Tensor<T> out(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c) {
    double mean = 0;
    double inv_std = 0;
    channel_moments(x.plane(c), mean, inv_std);
    const double gamma = params[nm.gamma_offset + c];
    const double beta = params[nm.beta_offset + c];
    auto src = x.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i] = static_cast<T>(gamma * ((src[i] - mean) * inv_std) + beta);
  }
  return out;
}

template <typename T>
Tensor<T> norm_backward(const InstanceNorm& nm, std::span<const T> params, const Tensor<T>& x,
                        const Tensor<T>& g, std::span<T> grads, bool want_input_grad) {
  Tensor<T> dx;
  if (want_input_grad) dx = Tensor<T>(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c) {
    double mean = 0;
    double inv_std = 0;
    channel_moments(x.plane(c), mean, inv_std);
    auto src = x.plane(c);
    auto gp = g.plane(c);
    double sum_g = 0;
    double sum_g_xhat = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double xhat = (src[i] - mean) * inv_std;
      sum_g += gp[i];
      sum_g_xhat += gp[i] * xhat;
    }
    if (!grads.empty()) {
      grads[nm.gamma_offset + c] += static_cast<T>(sum_g_xhat);
      grads[nm.beta_offset + c] += static_cast<T>(sum_g);
    }
    if (want_input_grad) {
      const double n = static_cast<double>(src.size());
      const double scale = params[nm.gamma_offset + c] * inv_std / n;
      auto dst = dx.plane(c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        const double xhat = (src[i] - mean) * inv_std;
        dst[i] = static_cast<T>(scale * (n * gp[i] - sum_g - xhat * sum_g_xhat));
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> glu_forward(const Tensor<T>& x) {
  const int half = x.channels / 2;
  Tensor<T> out(half, x.height, x.width);
  const std::size_t n = out.size();
  kernels::glu_forward(x.data.data(), x.data.data() + n, out.data.data(), n);
  return out;
}

template <typename T>
Tensor<T> glu_backward(const Tensor<T>& x, const Tensor<T>& g) {
  Tensor<T> dx(x.channels, x.height, x.width);
  const std::size_t n = g.size();
  kernels::glu_backward(x.data.data(), x.data.data() + n, g.data.data(), dx.data.data(),
                        dx.data.data() + n, n);
  return dx;
}

template <typename T>
Tensor<T> shuffle_forward(const PixelShuffle& ps, const Tensor<T>& x) {
  const int r = ps.factor;
  Tensor<T> out(x.channels / (r * r), x.height * r, x.width * r);
  for (int c = 0; c < out.channels; ++c)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int h = 0; h < x.height; ++h)
          for (int w = 0; w < x.width; ++w)
            out.at(c, h * r + i, w * r + j) = x.at((c * r + i) * r + j, h, w);
  return out;
}

template <typename T>
Tensor<T> shuffle_backward(const PixelShuffle& ps, const Tensor<T>& x, const Tensor<T>& g) {
  const int r = ps.factor;
  Tensor<T> dx(x.channels, x.height, x.width);
  for (int c = 0; c < g.channels; ++c)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int h = 0; h < x.height; ++h)
          for (int w = 0; w < x.width; ++w)
            dx.at((c * r + i) * r + j, h, w) = g.at(c, h * r + i, w * r + j);
  return dx;
}

template <typename T>
void check_finite(const Tensor<T>& t, std::size_t index, const Op& op) {
  // Exponent all-ones means Inf or NaN; OR-reduce so the loop vectorizes.
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits kExp = static_cast<Bits>(sizeof(T) == 4 ? 0x7f800000ull : 0x7ff0000000000000ull);
  Bits bad = 0;
  for (T v : t.data) bad |= Bits((std::bit_cast<Bits>(v) & kExp) == kExp);
  if (bad)
    throw Error(ErrorKind::kNumeric,
                "non-finite activation at layer " + std::to_string(index) + " (" + op_name(op) + ")");
}

}  // namespace

void infer_shape(const Network& net, int& channels, int& height, int& width) {
  int skips = 0;
  for (std::size_t i = 0; i < net.ops.size(); ++i)
    infer_op(i, net.ops[i], channels, height, width, skips);
}

template <typename T>
Tensor<T> forward(const Network& net, std::span<const T> params, Tensor<T> x, Tape<T>* tape) {
  {
    int c = x.channels;
    int h = x.height;
    int w = x.width;
    infer_shape(net, c, h, w);
  }
  if (tape != nullptr) {
    tape->inputs.clear();
    tape->inputs.reserve(net.ops.size());
  }
  std::vector<Tensor<T>> skips;
  for (std::size_t i = 0; i < net.ops.size(); ++i) {
    const Op& op = net.ops[i];
    Tensor<T> y;
    if (const auto* cv = std::get_if<Conv>(&op)) {
      y = conv_forward(*cv, params, x);
    } else if (const auto* nm = std::get_if<InstanceNorm>(&op)) {
      y = norm_forward(*nm, params, x);
    } else if (std::holds_alternative<Glu>(op)) {
      y = glu_forward(x);
    } else if (const auto* ps = std::get_if<PixelShuffle>(&op)) {
      y = shuffle_forward(*ps, x);
    } else if (std::holds_alternative<Flatten>(op)) {
      y = x;
      y.channels = x.channels * x.height;
      y.height = 1;
    } else if (const auto* u = std::get_if<Unflatten>(&op)) {
      y = x;
      y.height = x.channels / u->channels;
      y.channels = u->channels;
    } else if (std::holds_alternative<PushSkip>(op)) {
      skips.push_back(x);
      y = x;
    } else {
      y = x;
      const Tensor<T>& s = skips.back();
      for (std::size_t j = 0; j < y.size(); ++j) y.data[j] += s.data[j];
      skips.pop_back();
    }
    check_finite(y, i, op);
    if (tape != nullptr) {
      tape->inputs.push_back(std::move(x));
    }
    x = std::move(y);
  }
  return x;
}

template <typename T>
Tensor<T> backward(const Network& net, std::span<const T> params, const Tape<T>& tape,
                   Tensor<T> g, std::span<T> param_grads, bool want_input_grad) {
  if (tape.inputs.size() != net.ops.size())
    throw Error(ErrorKind::kData, "backward called without a matching forward tape");
  std::vector<Tensor<T>> skip_grads;
  for (std::size_t idx = net.ops.size(); idx-- > 0;) {
    const Op& op = net.ops[idx];
    const Tensor<T>& x = tape.inputs[idx];
    // The first op's input gradient is only needed when the caller asks.
    const bool need_dx = idx > 0 || want_input_grad;
    if (const auto* cv = std::get_if<Conv>(&op)) {
      g = conv_backward(*cv, params, x, g, param_grads, need_dx);
    } else if (const auto* nm = std::get_if<InstanceNorm>(&op)) {
      g = norm_backward(*nm, params, x, g, param_grads, need_dx);
    } else if (std::holds_alternative<Glu>(op)) {
      g = glu_backward(x, g);
    } else if (const auto* ps = std::get_if<PixelShuffle>(&op)) {
      g = shuffle_backward(*ps, x, g);
    } else if (std::holds_alternative<Flatten>(op) || std::holds_alternative<Unflatten>(op)) {
      g.channels = x.channels;
      g.height = x.height;
      g.width = x.width;
    } else if (std::holds_alternative<PushSkip>(op)) {
      const Tensor<T>& s = skip_grads.back();
      for (std::size_t j = 0; j < g.size(); ++j) g.data[j] += s.data[j];
      skip_grads.pop_back();
    } else {
      skip_grads.push_back(g);
    }
  }
  if (!want_input_grad) return {};
  return g;
}

template std::vector<float> init_params<float>(const Network&, std::uint64_t);
template std::vector<double> init_params<double>(const Network&, std::uint64_t);
template Tensor<float> forward<float>(const Network&, std::span<const float>, Tensor<float>,
                                      Tape<float>*);
template Tensor<double> forward<double>(const Network&, std::span<const double>, Tensor<double>,
                                        Tape<double>*);
template Tensor<float> backward<float>(const Network&, std::span<const float>,
                                       const Tape<float>&, Tensor<float>, std::span<float>, bool);
template Tensor<double> backward<double>(const Network&, std::span<const double>,
                                         const Tape<double>&, Tensor<double>, std::span<double>,
                                         bool);

}  // namespace maskvc::nn
