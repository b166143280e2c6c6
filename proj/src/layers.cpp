#include "uqsr/layers.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "uqsr/errors.hpp"

namespace uqsr {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      ksize_(ksize),
      stride_(stride),
      pad_(pad < 0 ? ksize / 2 : pad),
      weight_(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize, 0.0),
      bias_(out_ch, 0.0),
      dweight_(weight_.size(), 0.0),
      dbias_(out_ch, 0.0) {}

void Conv2d::init_kaiming(Rng& rng) {
  const double std = std::sqrt(2.0 / (static_cast<double>(in_ch_) * ksize_ * ksize_));
  for (double& w : weight_) w = std * rng.normal();
  for (double& b : bias_) b = 0.0;
}

namespace {

// Unpacks one sample into a (in_ch*k*k) × (oh*ow) patch matrix.
void im2col(const Tensor& x, int sample, int ksize, int stride, int pad, int oh, int ow,
            std::vector<double>& cols) {
  const int k2 = ksize * ksize;
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
  cols.assign(static_cast<std::size_t>(x.c) * k2 * ncols, 0.0);
  for (int c = 0; c < x.c; ++c)
    for (int ky = 0; ky < ksize; ++ky)
      for (int kx = 0; kx < ksize; ++kx) {
        const std::size_t row = (static_cast<std::size_t>(c) * k2 + ky * ksize + kx) * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= x.w) continue;
            cols[row + static_cast<std::size_t>(oy) * ow + ox] = x.at(sample, c, iy, ix);
          }
        }
      }
}

// Scatters a patch-matrix gradient back onto the input grid (adjoint of im2col).
void col2im(const std::vector<double>& cols, Tensor& dx, int sample, int ksize, int stride,
            int pad, int oh, int ow) {
  const int k2 = ksize * ksize;
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < dx.c; ++c)
    for (int ky = 0; ky < ksize; ++ky)
      for (int kx = 0; kx < ksize; ++kx) {
        const std::size_t row = (static_cast<std::size_t>(c) * k2 + ky * ksize + kx) * ncols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= dx.h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= dx.w) continue;
            dx.at(sample, c, iy, ix) += cols[row + static_cast<std::size_t>(oy) * ow + ox];
          }
        }
      }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.c != in_ch_) throw ShapeError("Conv2d: input channel mismatch");
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (oh < 1 || ow < 1) throw ShapeError("Conv2d: input smaller than kernel");
  Tensor y(x.n, out_ch_, oh, ow);

  const int krows = in_ch_ * ksize_ * ksize_;
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
  CMapRM w_mat(weight_.data(), out_ch_, krows);
  std::vector<double> cols;
  for (int nIdx = 0; nIdx < x.n; ++nIdx) {
    im2col(x, nIdx, ksize_, stride_, pad_, oh, ow, cols);
    CMapRM c_mat(cols.data(), krows, static_cast<Eigen::Index>(ncols));
    MapRM y_mat(y.v.data() + y.sample_size() * nIdx, out_ch_, static_cast<Eigen::Index>(ncols));
    y_mat.noalias() = w_mat * c_mat;
    for (int oc = 0; oc < out_ch_; ++oc) y_mat.row(oc).array() += bias_[oc];
  }
  if (ctx.store) x_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const int oh = dy.h, ow = dy.w;
  const int krows = in_ch_ * ksize_ * ksize_;
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;

  Tensor dx(x_.n, in_ch_, x_.h, x_.w);
  CMapRM w_mat(weight_.data(), out_ch_, krows);
  MapRM dw_mat(dweight_.data(), out_ch_, krows);
  std::vector<double> cols;
  std::vector<double> dcols(static_cast<std::size_t>(krows) * ncols);
  for (int nIdx = 0; nIdx < x_.n; ++nIdx) {
    im2col(x_, nIdx, ksize_, stride_, pad_, oh, ow, cols);
    CMapRM c_mat(cols.data(), krows, static_cast<Eigen::Index>(ncols));
    CMapRM dy_mat(dy.v.data() + dy.sample_size() * nIdx, out_ch_,
                  static_cast<Eigen::Index>(ncols));
    dw_mat.noalias() += dy_mat * c_mat.transpose();
    for (int oc = 0; oc < out_ch_; ++oc) dbias_[oc] += dy_mat.row(oc).sum();
    MapRM dc_mat(dcols.data(), krows, static_cast<Eigen::Index>(ncols));
    dc_mat.noalias() = w_mat.transpose() * dy_mat;
    col2im(dcols, dx, nIdx, ksize_, stride_, pad_, oh, ow);
  }
  return dx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight_, &dweight_});
  out.push_back({prefix + ".bias", &bias_, &dbias_});
}

// ---------------------------------------------------------------------------
// Activations

Tensor PReLU::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor y = x;
  const double a = slope_[0];
  for (double& v : y.v)
    if (v < 0.0) v *= a;
  if (ctx.store) x_ = x;
  return y;
}

Tensor PReLU::backward(const Tensor& dy) {
  Tensor dx = dy;
  const double a = slope_[0];
  double da = 0.0;
  for (std::size_t i = 0; i < dx.v.size(); ++i) {
    if (x_.v[i] < 0.0) {
      da += dy.v[i] * x_.v[i];
      dx.v[i] *= a;
    }
  }
  dslope_[0] += da;
  return dx;
}

void PReLU::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".slope", &slope_, &dslope_});
}

Tensor LeakyReLU::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor y = x;
  for (double& v : y.v)
    if (v < 0.0) v *= alpha_;
  if (ctx.store) x_ = x;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    if (x_.v[i] < 0.0) dx.v[i] *= alpha_;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor y = x;
  for (double& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
  if (ctx.store) y_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= y_.v[i] * (1.0 - y_.v[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout

Tensor Dropout::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (!ctx.stochastic || p_ <= 0.0) {
    if (ctx.store) mask_.clear();
    return x;
  }
  if (!ctx.rng) throw DomainError("Dropout: stochastic forward needs an rng");
  const double keep_scale = 1.0 / (1.0 - p_);
  Tensor y = x;
  std::vector<double> mask(x.v.size());
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    mask[i] = ctx.rng->uniform() < p_ ? 0.0 : keep_scale;
    y.v[i] *= mask[i];
  }
  if (ctx.store) mask_ = std::move(mask);
  return y;
}

Tensor Dropout::backward(const Tensor& dy) {
  if (mask_.empty()) return dy;
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= mask_[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Shuffles and pools

Tensor pixel_shuffle(const Tensor& x, int r) {
  if (r < 1 || x.c % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels not divisible by r^2");
  if (r == 1) return x;
  Tensor y(x.n, x.c / (r * r), x.h * r, x.w * r);
  for (int nIdx = 0; nIdx < x.n; ++nIdx)
    for (int c = 0; c < y.c; ++c)
      for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b)
          for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j)
              y.at(nIdx, c, r * i + a, r * j + b) = x.at(nIdx, c * r * r + a * r + b, i, j);
  return y;
}

Tensor pixel_unshuffle(const Tensor& x, int r) {
  if (r < 1 || x.h % r != 0 || x.w % r != 0)
    throw ShapeError("pixel_unshuffle: spatial dims not divisible by r");
  if (r == 1) return x;
  Tensor y(x.n, x.c * r * r, x.h / r, x.w / r);
  for (int nIdx = 0; nIdx < x.n; ++nIdx)
    for (int c = 0; c < x.c; ++c)
      for (int a = 0; a < r; ++a)
        for (int b = 0; b < r; ++b)
          for (int i = 0; i < y.h; ++i)
            for (int j = 0; j < y.w; ++j)
              y.at(nIdx, c * r * r + a * r + b, i, j) = x.at(nIdx, c, r * i + a, r * j + b);
  return y;
}

Tensor PixelShuffle::forward(const Tensor& x, const ForwardCtx&) { return pixel_shuffle(x, r_); }

Tensor PixelShuffle::backward(const Tensor& dy) { return pixel_unshuffle(dy, r_); }

Tensor AvgPool2d::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.h % k_ != 0 || x.w % k_ != 0) throw ShapeError("AvgPool2d: dims not divisible by k");
  Tensor y(x.n, x.c, x.h / k_, x.w / k_);
  const double inv = 1.0 / (k_ * k_);
  for (int nIdx = 0; nIdx < x.n; ++nIdx)
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) {
          double acc = 0.0;
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) acc += x.at(nIdx, c, oy * k_ + ky, ox * k_ + kx);
          y.at(nIdx, c, oy, ox) = acc * inv;
        }
  if (ctx.store) {
    in_h_ = x.h;
    in_w_ = x.w;
  }
  return y;
}

Tensor AvgPool2d::backward(const Tensor& dy) {
  Tensor dx(dy.n, dy.c, in_h_, in_w_);
  const double inv = 1.0 / (k_ * k_);
  for (int nIdx = 0; nIdx < dy.n; ++nIdx)
    for (int c = 0; c < dy.c; ++c)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
          const double g = dy.at(nIdx, c, oy, ox) * inv;
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) dx.at(nIdx, c, oy * k_ + ky, ox * k_ + kx) = g;
        }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, const ForwardCtx& ctx) {
  Tensor y(x.n, x.c, 1, 1);
  const double inv = 1.0 / (static_cast<double>(x.h) * x.w);
  for (int nIdx = 0; nIdx < x.n; ++nIdx)
    for (int c = 0; c < x.c; ++c) {
      double acc = 0.0;
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) acc += x.at(nIdx, c, iy, ix);
      y.at(nIdx, c, 0, 0) = acc * inv;
    }
  if (ctx.store) {
    in_h_ = x.h;
    in_w_ = x.w;
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
  Tensor dx(dy.n, dy.c, in_h_, in_w_);
  const double inv = 1.0 / (static_cast<double>(in_h_) * in_w_);
  for (int nIdx = 0; nIdx < dy.n; ++nIdx)
    for (int c = 0; c < dy.c; ++c) {
      const double g = dy.at(nIdx, c, 0, 0) * inv;
      for (int iy = 0; iy < in_h_; ++iy)
        for (int ix = 0; ix < in_w_; ++ix) dx.at(nIdx, c, iy, ix) = g;
    }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in_features, int out_features)
    : in_f_(in_features),
      out_f_(out_features),
      weight_(static_cast<std::size_t>(out_features) * in_features, 0.0),
      bias_(out_features, 0.0),
      dweight_(weight_.size(), 0.0),
      dbias_(out_features, 0.0) {}

void Linear::init_kaiming(Rng& rng) {
  const double std = std::sqrt(2.0 / in_f_);
  for (double& w : weight_) w = std * rng.normal();
  for (double& b : bias_) b = 0.0;
}

Tensor Linear::forward(const Tensor& x, const ForwardCtx& ctx) {
  if (x.c != in_f_ || x.h != 1 || x.w != 1) throw ShapeError("Linear: expected N x in x 1 x 1");
  Tensor y(x.n, out_f_, 1, 1);
  CMapRM w_mat(weight_.data(), out_f_, in_f_);
  CMapRM x_mat(x.v.data(), x.n, in_f_);
  MapRM y_mat(y.v.data(), x.n, out_f_);
  y_mat.noalias() = x_mat * w_mat.transpose();
  for (int o = 0; o < out_f_; ++o) y_mat.col(o).array() += bias_[o];
  if (ctx.store) x_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  Tensor dx(x_.n, in_f_, 1, 1);
  CMapRM w_mat(weight_.data(), out_f_, in_f_);
  CMapRM x_mat(x_.v.data(), x_.n, in_f_);
  CMapRM dy_mat(dy.v.data(), dy.n, out_f_);
  MapRM dw_mat(dweight_.data(), out_f_, in_f_);
  MapRM dx_mat(dx.v.data(), dx.n, in_f_);
  dw_mat.noalias() += dy_mat.transpose() * x_mat;
  for (int o = 0; o < out_f_; ++o) dbias_[o] += dy_mat.col(o).sum();
  dx_mat.noalias() = dy_mat * w_mat;
  return dx;
}

void Linear::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight_, &dweight_});
  out.push_back({prefix + ".bias", &bias_, &dbias_});
}

// ---------------------------------------------------------------------------
// Concat / slice helpers

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  int total_c = 0;
  for (const Tensor* p : parts) total_c += p->c;
  const Tensor& f = *parts.front();
  Tensor y(f.n, total_c, f.h, f.w);
  int c_off = 0;
  for (const Tensor* p : parts) {
    if (p->n != f.n || p->h != f.h || p->w != f.w)
      throw ShapeError("concat_channels: mismatched dims");
    for (int nIdx = 0; nIdx < f.n; ++nIdx)
      for (int c = 0; c < p->c; ++c)
        for (int iy = 0; iy < f.h; ++iy)
          for (int ix = 0; ix < f.w; ++ix)
            y.at(nIdx, c_off + c, iy, ix) = p->at(nIdx, c, iy, ix);
    c_off += p->c;
  }
  return y;
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
  if (c0 < 0 || c1 > x.c || c0 >= c1) throw ShapeError("slice_channels: bad range");
  Tensor y(x.n, c1 - c0, x.h, x.w);
  for (int nIdx = 0; nIdx < x.n; ++nIdx)
    for (int c = c0; c < c1; ++c)
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) y.at(nIdx, c - c0, iy, ix) = x.at(nIdx, c, iy, ix);
  return y;
}

Tensor concat_samples(const Tensor& a, const Tensor& b) {
  if (a.c != b.c || a.h != b.h || a.w != b.w) throw ShapeError("concat_samples: mismatched dims");
  Tensor y(a.n + b.n, a.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return y;
}

Tensor take_samples(const Tensor& x, int start, int count) {
  if (start < 0 || start + count > x.n) throw ShapeError("take_samples: bad range");
  Tensor y(count, x.c, x.h, x.w);
  std::copy(x.v.begin() + static_cast<std::ptrdiff_t>(x.sample_size() * start),
            x.v.begin() + static_cast<std::ptrdiff_t>(x.sample_size() * (start + count)),
            y.v.begin());
  return y;
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) p.grad->assign(p.grad->size(), 0.0);
}

}  // namespace uqsr
