#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace maskvc::nn {

// Channel-major 3-D activation (channels x height x width). Height is the
// frequency axis and width the time axis throughout the project.
template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, T(0)) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }

  T& at(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * height + h) * width + w];
  }
  const T& at(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * height + h) * width + w];
  }

  std::span<T> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const T> plane(int c) const {
    return {data.data() + c * plane_size(), plane_size()};
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

}  // namespace maskvc::nn
