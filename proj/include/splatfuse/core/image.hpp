#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace splatfuse {

// Row-major interleaved image container: index = (y * width + x) * channels + c.
template <typename T>
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int h, int w, int c = 1, T fill = T(0))
      : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {}

  T& at(int y, int x, int c = 0) {
    assert(y >= 0 && y < height && x >= 0 && x < width && c >= 0 && c < channels);
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  const T& at(int y, int x, int c = 0) const {
    assert(y >= 0 && y < height && x >= 0 && x < width && c >= 0 && c < channels);
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  T* row(int y) { return data.data() + static_cast<size_t>(y) * width * channels; }
  const T* row(int y) const { return data.data() + static_cast<size_t>(y) * width * channels; }

  size_t pixel_count() const { return static_cast<size_t>(height) * width; }
  bool empty() const { return data.empty(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

using ImageF = Image<float>;
using ImageD = Image<double>;

// Depth in meters; 0 marks an invalid pixel.
using DepthMap = Image<float>;
// Peak softmax probability per pixel, in (0,1).
using ConfidenceMap = Image<float>;

}  // namespace splatfuse
