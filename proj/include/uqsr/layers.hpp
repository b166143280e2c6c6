#pragma once

#include <string>
#include <vector>

#include "uqsr/rng.hpp"
#include "uqsr/tensor.hpp"

namespace uqsr {

// Mutable view of one named parameter array and its gradient accumulator.
struct ParamRef {
  std::string name;
  std::vector<double>* value;
  std::vector<double>* grad;
};

// Per-forward switches. `stochastic` activates dropout masks (drawn from
// `rng`); `store` caches the activations needed by a later backward().
struct ForwardCtx {
  bool stochastic = false;
  bool store = false;
  Rng* rng = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, const ForwardCtx& ctx) = 0;
  // Consumes the activations cached by the last stored forward; gradients
  // accumulate into the parameter grad buffers.
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {}
};

class Conv2d final : public Layer {
 public:
  // pad = -1 selects "same" padding (ksize/2).
  Conv2d(int in_ch, int out_ch, int ksize, int stride = 1, int pad = -1);

  void init_kaiming(Rng& rng);  // weights ~ N(0, 2/fan_in), biases zero

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;

  int out_h(int in_h) const { return (in_h + 2 * pad_ - ksize_) / stride_ + 1; }
  int out_w(int in_w) const { return (in_w + 2 * pad_ - ksize_) / stride_ + 1; }
  std::size_t param_count() const { return weight_.size() + bias_.size(); }

 private:
  int in_ch_, out_ch_, ksize_, stride_, pad_;
  std::vector<double> weight_;  // [out_ch][in_ch*k*k], row-major
  std::vector<double> bias_;    // [out_ch]
  std::vector<double> dweight_, dbias_;
  Tensor x_;  // cached input for backward
};

// Learnable leaky slope, one scalar shared across channels (initial 0.25).
class PReLU final : public Layer {
 public:
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;

 private:
  std::vector<double> slope_{0.25};
  std::vector<double> dslope_{0.0};
  Tensor x_;
};

class LeakyReLU final : public Layer {
 public:
  explicit LeakyReLU(double alpha = 0.2) : alpha_(alpha) {}
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;

 private:
  double alpha_;
  Tensor x_;
};

class Sigmoid final : public Layer {
 public:
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor y_;
};

// Inverted dropout: live units scale by 1/(1-p) so eval needs no rescaling.
// p = 0 bypasses the mask draw entirely, keeping RNG streams untouched.
class Dropout final : public Layer {
 public:
  explicit Dropout(double p) : p_(p) {}
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;
  double p() const { return p_; }

 private:
  double p_;
  std::vector<double> mask_;
};

class PixelShuffle final : public Layer {
 public:
  explicit PixelShuffle(int r) : r_(r) {}
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;

 private:
  int r_;
};

class AvgPool2d final : public Layer {
 public:
  explicit AvgPool2d(int k = 2) : k_(k) {}
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;

 private:
  int k_;
  int in_h_ = 0, in_w_ = 0;
};

// N×C×H×W -> N×C×1×1 spatial mean.
class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

// Fully connected over the channel axis of an N×C×1×1 tensor.
class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features);
  void init_kaiming(Rng& rng);

  Tensor forward(const Tensor& x, const ForwardCtx& ctx) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::size_t param_count() const { return weight_.size() + bias_.size(); }

 private:
  int in_f_, out_f_;
  std::vector<double> weight_;  // [out][in]
  std::vector<double> bias_;
  std::vector<double> dweight_, dbias_;
  Tensor x_;
};

// Subpixel rearrangement: out(c, r*i+a, r*j+b) = in(c*r^2 + a*r + b, i, j).
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_unshuffle(const Tensor& x, int r);

// Channel-axis concatenation and slicing (dense-block plumbing).
Tensor concat_channels(const std::vector<const Tensor*>& parts);
Tensor slice_channels(const Tensor& x, int c0, int c1);  // [c0, c1)

// Batch-axis concatenation and slicing.
Tensor concat_samples(const Tensor& a, const Tensor& b);
Tensor take_samples(const Tensor& x, int start, int count);

void zero_grads(const std::vector<ParamRef>& params);

}  // namespace uqsr
