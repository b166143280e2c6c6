#include "uqsr/image.hpp"

#include "uqsr/errors.hpp"

namespace uqsr {

Tensor to_tensor(const ImageTensor& img) {
  Tensor t(1, img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) t.at(0, c, y, x) = img.at(y, x, c);
  return t;
}

Tensor to_tensor(const std::vector<ImageTensor>& batch) {
  const ImageTensor& first = batch.front();
  Tensor t(static_cast<int>(batch.size()), first.channels, first.height, first.width);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ImageTensor& img = batch[i];
    if (!img.same_shape(first)) throw ShapeError("to_tensor: ragged batch");
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < img.channels; ++c)
          t.at(static_cast<int>(i), c, y, x) = img.at(y, x, c);
  }
  return t;
}

ImageTensor to_image(const Tensor& t, int sample) {
  ImageTensor img(t.h, t.w, t.c);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x)
      for (int c = 0; c < t.c; ++c) img.at(y, x, c) = t.at(sample, c, y, x);
  return img;
}

std::vector<ImageTensor> to_images(const Tensor& t) {
  std::vector<ImageTensor> out;
  out.reserve(t.n);
  for (int i = 0; i < t.n; ++i) out.push_back(to_image(t, i));
  return out;
}

}  // namespace uqsr
