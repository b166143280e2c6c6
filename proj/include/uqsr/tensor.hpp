#pragma once

#include <cstddef>
#include <vector>

namespace uqsr {

// Dense NCHW tensor of doubles; the carrier for all network math.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

  std::size_t size() const { return v.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  double& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  double at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  void fill(double value) { v.assign(v.size(), value); }

  Tensor& operator+=(const Tensor& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& x : v) x *= s;
    return *this;
  }
};

inline Tensor clamp01(Tensor t) {
  for (double& x : t.v) x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  return t;
}

}  // namespace uqsr
