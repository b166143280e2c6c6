#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "uqsr/errors.hpp"
#include "uqsr/layers.hpp"
#include "uqsr/rng.hpp"
#include "uqsr/tensor.hpp"

using namespace uqsr;
using test_support::random_tensor;
using test_support::rel_err;

namespace {

double weighted_sum(Layer& layer, const Tensor& x, const Tensor& g) {
  ForwardCtx ctx;
  const Tensor y = layer.forward(x, ctx);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * g.v[i];
  return acc;
}

void fill_params(Layer& layer, Rng& rng) {
  std::vector<ParamRef> params;
  layer.collect_params("p", params);
  for (const ParamRef& p : params)
    for (double& v : *p.value) v = rng.uniform() - 0.5;
}

Tensor random_tensor_like(Layer& layer, const Tensor& x, Rng& rng) {
  ForwardCtx ctx;
  const Tensor y = layer.forward(x, ctx);
  Tensor g(y.n, y.c, y.h, y.w);
  for (double& v : g.v) v = rng.uniform() - 0.5;
  return g;
}

// Central-difference check of every parameter gradient and the input gradient
// against a single stored forward/backward pass.
void check_gradients(Layer& layer, const Tensor& x, Rng& rng, double tol = 1e-5) {
  Tensor g = random_tensor_like(layer, x, rng);
  std::vector<ParamRef> params;
  layer.collect_params("p", params);
  zero_grads(params);

  ForwardCtx ctx;
  ctx.store = true;
  layer.forward(x, ctx);
  const Tensor dx = layer.backward(g);

  const double h = 1e-6;
  for (const ParamRef& p : params) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double hi = weighted_sum(layer, x, g);
      (*p.value)[i] = keep - h;
      const double lo = weighted_sum(layer, x, g);
      (*p.value)[i] = keep;
      const double fd = (hi - lo) / (2.0 * h);
      CHECK(rel_err((*p.grad)[i], fd) < tol);
    }
  }

  Tensor xp = x;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    const double keep = x.v[i];
    xp.v[i] = keep + h;
    const double hi = weighted_sum(layer, xp, g);
    xp.v[i] = keep - h;
    const double lo = weighted_sum(layer, xp, g);
    xp.v[i] = keep;
    const double fd = (hi - lo) / (2.0 * h);
    CHECK(rel_err(dx.v[i], fd) < tol);
  }
}

Tensor naive_conv(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b,
                  int out_ch, int k, int stride, int pad) {
  const int oh = (x.h + 2 * pad - k) / stride + 1;
  const int ow = (x.w + 2 * pad - k) / stride + 1;
  Tensor y(x.n, out_ch, oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int oc = 0; oc < out_ch; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b[oc];
          for (int ic = 0; ic < x.c; ++ic)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                acc += w[(static_cast<std::size_t>(oc) * x.c + ic) * k * k + ky * k + kx] *
                       x.at(n, ic, iy, ix);
              }
          y.at(n, oc, oy, ox) = acc;
        }
  return y;
}

}  // namespace

TEST_SUITE_BEGIN("layers");

TEST_CASE("conv2d matches a direct convolution") {
  Rng rng(200);
  const Tensor x = random_tensor(1, 2, 5, 4, rng, -1.0, 1.0);

  Conv2d same(2, 3, 3);
  fill_params(same, rng);
  std::vector<ParamRef> params;
  same.collect_params("p", params);
  const Tensor expect = naive_conv(x, *params[0].value, *params[1].value, 3, 3, 1, 1);
  ForwardCtx ctx;
  const Tensor y = same.forward(x, ctx);
  REQUIRE(y.c == 3);
  REQUIRE(y.h == 5);
  REQUIRE(y.w == 4);
  CHECK(test_support::max_abs_diff(y.v, expect.v) < 1e-12);

  Conv2d strided(2, 3, 3, 2, 1);
  fill_params(strided, rng);
  params.clear();
  strided.collect_params("p", params);
  const Tensor expect2 = naive_conv(x, *params[0].value, *params[1].value, 3, 3, 2, 1);
  const Tensor y2 = strided.forward(x, ctx);
  REQUIRE(y2.h == 3);
  REQUIRE(y2.w == 2);
  CHECK(test_support::max_abs_diff(y2.v, expect2.v) < 1e-12);

  CHECK_THROWS_AS(same.forward(random_tensor(1, 5, 4, 4, rng), ctx), ShapeError);
}

TEST_CASE("conv2d gradients agree with finite differences") {
  Rng rng(201);
  Conv2d conv(2, 2, 3, 1, 1);
  fill_params(conv, rng);
  const Tensor x = random_tensor(2, 2, 4, 4, rng, -1.0, 1.0);
  check_gradients(conv, x, rng);
}

TEST_CASE("prelu applies a learnable negative slope") {
  Rng rng(202);
  PReLU act;
  Tensor x(1, 1, 2, 2);
  x.v = {1.5, -2.0, 0.0, -0.4};
  ForwardCtx ctx;
  const Tensor y = act.forward(x, ctx);
  CHECK(y.v[0] == 1.5);
  CHECK(y.v[1] == doctest::Approx(-0.5));
  CHECK(y.v[2] == 0.0);
  CHECK(y.v[3] == doctest::Approx(-0.1));

  const Tensor xs = random_tensor(1, 2, 3, 3, rng, -1.0, 1.0);
  check_gradients(act, xs, rng);
}

TEST_CASE("leaky relu and sigmoid forward and backward") {
  Rng rng(203);
  LeakyReLU lrelu(0.2);
  Tensor x(1, 1, 1, 3);
  x.v = {2.0, -1.0, -0.5};
  ForwardCtx ctx;
  const Tensor y = lrelu.forward(x, ctx);
  CHECK(y.v[0] == 2.0);
  CHECK(y.v[1] == doctest::Approx(-0.2));
  CHECK(y.v[2] == doctest::Approx(-0.1));
  check_gradients(lrelu, random_tensor(1, 2, 3, 3, rng, -1.0, 1.0), rng);

  Sigmoid sig;
  Tensor z(1, 1, 1, 2);
  z.v = {0.0, 2.0};
  const Tensor s = sig.forward(z, ctx);
  CHECK(s.v[0] == doctest::Approx(0.5));
  CHECK(s.v[1] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  check_gradients(sig, random_tensor(1, 1, 2, 2, rng, -2.0, 2.0), rng);
}

TEST_CASE("dropout p=0 bypasses the mask and the rng") {
  Rng rng(204);
  const Tensor x = random_tensor(1, 2, 4, 4, rng);
  Dropout drop(0.0);
  Rng used(9), untouched(9);
  ForwardCtx ctx;
  ctx.stochastic = true;
  ctx.rng = &used;
  const Tensor y = drop.forward(x, ctx);
  CHECK(y.v == x.v);
  CHECK(used.next_u64() == untouched.next_u64());
}

TEST_CASE("dropout draws reproducible inverted masks") {
  Rng rng(205);
  const Tensor x = random_tensor(1, 4, 50, 50, rng, 0.5, 1.0);
  Dropout drop(0.4);
  const double keep_scale = 1.0 / 0.6;

  Rng ra(11);
  ForwardCtx ctx;
  ctx.stochastic = true;
  ctx.store = true;
  ctx.rng = &ra;
  const Tensor y = drop.forward(x, ctx);

  int zeros = 0;
  for (std::size_t i = 0; i < y.v.size(); ++i) {
    const bool dropped = y.v[i] == 0.0;
    const bool kept = std::abs(y.v[i] - x.v[i] * keep_scale) < 1e-12;
    CHECK((dropped || kept));
    zeros += dropped ? 1 : 0;
  }
  const double frac = static_cast<double>(zeros) / static_cast<double>(y.v.size());
  CHECK(std::abs(frac - 0.4) < 0.03);

  const Tensor dy = random_tensor(1, 4, 50, 50, rng);
  const Tensor dx = drop.backward(dy);
  for (std::size_t i = 0; i < dx.v.size(); ++i) {
    if (y.v[i] == 0.0)
      CHECK(dx.v[i] == 0.0);
    else
      CHECK(dx.v[i] == doctest::Approx(dy.v[i] * keep_scale));
  }

  Rng rb(11);
  ForwardCtx ctx2;
  ctx2.stochastic = true;
  ctx2.rng = &rb;
  const Tensor y2 = drop.forward(x, ctx2);
  CHECK(y2.v == y.v);

  ForwardCtx eval;
  const Tensor ye = drop.forward(x, eval);
  CHECK(ye.v == x.v);
}

TEST_CASE("pixel shuffle rearranges subpixel channels") {
  Tensor x(1, 4, 2, 2);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) x.at(0, c, i, j) = c;
  const Tensor y = pixel_shuffle(x, 2);
  REQUIRE(y.c == 1);
  REQUIRE(y.h == 4);
  REQUIRE(y.w == 4);
  for (int iy = 0; iy < 4; ++iy)
    for (int ix = 0; ix < 4; ++ix)
      CHECK(y.at(0, 0, iy, ix) == (iy % 2) * 2 + (ix % 2));

  Rng rng(206);
  const Tensor z = random_tensor(2, 8, 3, 5, rng);
  CHECK(pixel_shuffle(z, 1).v == z.v);
  CHECK(pixel_unshuffle(pixel_shuffle(z, 2), 2).v == z.v);
  CHECK_THROWS_AS(pixel_shuffle(random_tensor(1, 3, 2, 2, rng), 2), ShapeError);
  CHECK_THROWS_AS(pixel_unshuffle(random_tensor(1, 1, 3, 4, rng), 2), ShapeError);

  PixelShuffle layer(2);
  ForwardCtx ctx;
  CHECK(layer.forward(z, ctx).v == pixel_shuffle(z, 2).v);
  const Tensor dy = random_tensor(2, 2, 6, 10, rng);
  CHECK(layer.backward(dy).v == pixel_unshuffle(dy, 2).v);
}

TEST_CASE("average pools and their adjoints") {
  AvgPool2d pool(2);
  Tensor x(1, 1, 2, 4);
  x.v = {1, 3, 5, 7, 2, 4, 6, 8};
  ForwardCtx ctx;
  ctx.store = true;
  const Tensor y = pool.forward(x, ctx);
  REQUIRE(y.h == 1);
  REQUIRE(y.w == 2);
  CHECK(y.v[0] == doctest::Approx(2.5));
  CHECK(y.v[1] == doctest::Approx(6.5));
  Tensor dy(1, 1, 1, 2);
  dy.v = {4.0, 8.0};
  const Tensor dx = pool.backward(dy);
  CHECK(dx.v[0] == doctest::Approx(1.0));
  CHECK(dx.v[5] == doctest::Approx(1.0));
  CHECK(dx.v[6] == doctest::Approx(2.0));
  CHECK_THROWS_AS(pool.forward(Tensor(1, 1, 3, 4), ctx), ShapeError);

  GlobalAvgPool gap;
  Rng rng(207);
  const Tensor z = random_tensor(2, 3, 4, 5, rng);
  const Tensor g = gap.forward(z, ctx);
  REQUIRE(g.h == 1);
  REQUIRE(g.w == 1);
  double acc = 0.0;
  for (int iy = 0; iy < 4; ++iy)
    for (int ix = 0; ix < 5; ++ix) acc += z.at(1, 2, iy, ix);
  CHECK(g.at(1, 2, 0, 0) == doctest::Approx(acc / 20.0));
  Tensor gd(2, 3, 1, 1);
  gd.fill(1.0);
  const Tensor gdx = gap.backward(gd);
  for (double v : gdx.v) CHECK(v == doctest::Approx(1.0 / 20.0));
}

TEST_CASE("linear layer forward and gradients") {
  Rng rng(208);
  Linear lin(4, 3);
  fill_params(lin, rng);
  std::vector<ParamRef> params;
  lin.collect_params("p", params);
  const std::vector<double>& w = *params[0].value;
  const std::vector<double>& b = *params[1].value;

  const Tensor x = random_tensor(2, 4, 1, 1, rng, -1.0, 1.0);
  ForwardCtx ctx;
  const Tensor y = lin.forward(x, ctx);
  REQUIRE(y.c == 3);
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 3; ++o) {
      double acc = b[o];
      for (int i = 0; i < 4; ++i) acc += w[static_cast<std::size_t>(o) * 4 + i] * x.at(n, i, 0, 0);
      CHECK(y.at(n, o, 0, 0) == doctest::Approx(acc));
    }
  check_gradients(lin, x, rng);
}

TEST_CASE("kaiming init hits the target spread") {
  Rng rng(209);
  Conv2d conv(64, 64, 3);
  conv.init_kaiming(rng);
  std::vector<ParamRef> params;
  conv.collect_params("p", params);
  const std::vector<double>& w = *params[0].value;
  REQUIRE(w.size() == 64u * 64u * 9u);

  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size() - 1);

  const double target = std::sqrt(2.0 / 576.0);
  CHECK(std::abs(mean) < 2e-3);
  CHECK(std::abs(std::sqrt(var) - target) < 2e-3);
  for (double v : *params[1].value) CHECK(v == 0.0);

  Linear lin(512, 10);
  lin.init_kaiming(rng);
  params.clear();
  lin.collect_params("p", params);
  const std::vector<double>& lw = *params[0].value;
  double lvar = 0.0, lmean = 0.0;
  for (double v : lw) lmean += v;
  lmean /= static_cast<double>(lw.size());
  for (double v : lw) lvar += (v - lmean) * (v - lmean);
  lvar /= static_cast<double>(lw.size() - 1);
  CHECK(std::abs(std::sqrt(lvar) - std::sqrt(2.0 / 512.0)) < 3e-3);
}

TEST_CASE("channel and sample plumbing") {
  Rng rng(210);
  const Tensor a = random_tensor(2, 2, 3, 3, rng);
  const Tensor b = random_tensor(2, 3, 3, 3, rng);
  const Tensor cat = concat_channels({&a, &b});
  REQUIRE(cat.c == 5);
  CHECK(slice_channels(cat, 0, 2).v == a.v);
  CHECK(slice_channels(cat, 2, 5).v == b.v);
  CHECK(cat.at(1, 3, 2, 2) == b.at(1, 1, 2, 2));
  CHECK_THROWS_AS(slice_channels(cat, 3, 9), ShapeError);

  const Tensor s = concat_samples(a, a);
  REQUIRE(s.n == 4);
  CHECK(take_samples(s, 0, 2).v == a.v);
  CHECK(take_samples(s, 2, 2).v == a.v);
  CHECK_THROWS_AS(take_samples(s, 3, 4), ShapeError);

  Conv2d conv(1, 1, 3);
  std::vector<ParamRef> params;
  conv.collect_params("p", params);
  (*params[0].grad)[0] = 5.0;
  zero_grads(params);
  CHECK((*params[0].grad)[0] == 0.0);
}

TEST_SUITE_END();
