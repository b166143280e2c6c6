#pragma once

#include <cstddef>
#include <vector>

#include "uqsr/tensor.hpp"

namespace uqsr {

// H×W×C image, interleaved channels, intensities in [0,1].
struct ImageTensor {
  int height = 0, width = 0, channels = 0;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0) {}

  double& at(int y, int x, int ch) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  double at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

inline ImageTensor clamp01(ImageTensor img) {
  for (double& x : img.data) x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  return img;
}

// Layout conversions between the image carrier and the NCHW network tensor.
Tensor to_tensor(const ImageTensor& img);
Tensor to_tensor(const std::vector<ImageTensor>& batch);
ImageTensor to_image(const Tensor& t, int sample = 0);
std::vector<ImageTensor> to_images(const Tensor& t);

}  // namespace uqsr
