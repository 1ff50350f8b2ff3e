#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "gradcheck.hpp"
#include "nulite/layers.hpp"
#include "nulite/tensor.hpp"

using namespace nulite;

namespace {

ConvParams make_conv(int in_ch, int out_ch, int k, int stride, int pad,
                     bool bias, Rng& rng) {
  ConvParams p;
  p.in_channels = in_ch;
  p.out_channels = out_ch;
  p.kernel = k;
  p.stride = stride;
  p.pad = pad;
  p.weight = Tensor4::randn({out_ch, in_ch, k, k}, 0.3f, rng);
  if (bias) {
    p.bias.resize(out_ch);
    for (auto& b : p.bias) b = static_cast<float>(rng.normal(0.3));
  }
  return p;
}

}  // namespace

TEST_CASE("conv2d_out_size uses floor division") {
  CHECK(conv2d_out_size(224, 5, 2, 3) == 113);
  CHECK(conv2d_out_size(56, 1, 1, 0) == 56);
  CHECK(conv2d_out_size(56, 3, 1, 1) == 56);
  CHECK(conv2d_out_size(14, 14, 1, 0) == 1);
  CHECK(conv2d_out_size(7, 3, 2, 1) == 4);
  CHECK_THROWS_AS(conv2d_out_size(2, 5, 1, 0), std::invalid_argument);
}

TEST_CASE("pool_out_size uses ceiling division") {
  CHECK(pool_out_size(113, 3, 2) == 56);
  CHECK(pool_out_size(56, 3, 2) == 28);
  CHECK(pool_out_size(28, 3, 2) == 14);
  CHECK(pool_out_size(4, 3, 2) == 2);
  CHECK_THROWS_AS(pool_out_size(2, 3, 2), std::invalid_argument);
}

TEST_CASE("conv2d identity kernel passes input through") {
  Rng rng(1);
  Tensor4 x = Tensor4::randn({2, 3, 6, 6}, 1.0f, rng);
  ConvParams p;
  p.in_channels = 3;
  p.out_channels = 3;
  p.kernel = 1;
  p.weight = Tensor4::zeros({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) p.weight.at(c, c, 0, 0) = 1.0f;
  Tensor4 y = conv2d_forward(x, p);
  REQUIRE(y.dims() == x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i)
    CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-6));
}

TEST_CASE("conv2d all-ones 3x3 on ones-input sums the window") {
  Tensor4 x = Tensor4::full({1, 1, 5, 5}, 1.0f);
  ConvParams p;
  p.in_channels = 1;
  p.out_channels = 1;
  p.kernel = 3;
  p.stride = 1;
  p.pad = 0;
  p.weight = Tensor4::full({1, 1, 3, 3}, 1.0f);
  Tensor4 y = conv2d_forward(x, p);
  REQUIRE(y.dims() == Dims4{1, 1, 3, 3});
  for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 9.0f);

  // with pad 1 the corner windows see only 4 valid taps
  p.pad = 1;
  Tensor4 yp = conv2d_forward(x, p);
  REQUIRE(yp.dims() == Dims4{1, 1, 5, 5});
  CHECK(yp.at(0, 0, 0, 0) == 4.0f);
  CHECK(yp.at(0, 0, 0, 2) == 6.0f);
  CHECK(yp.at(0, 0, 2, 2) == 9.0f);
}

TEST_CASE("conv2d stem layer output dims") {
  Rng rng(2);
  Tensor4 x = Tensor4::randn({1, 3, 224, 224}, 0.5f, rng);
  ConvParams p = make_conv(3, 64, 5, 2, 3, false, rng);
  Tensor4 y = conv2d_forward(x, p);
  CHECK(y.dims() == Dims4{1, 64, 113, 113});
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(42);
  Tensor4 x = Tensor4::randn({1, 2, 5, 5}, 0.6f, rng);
  ConvParams p = make_conv(2, 3, 3, 1, 1, true, rng);
  Tensor4 w = Tensor4::randn({1, 3, 5, 5}, 1.0f, rng);  // loss weights

  auto loss = [&]() { return gradcheck::weighted_sum(conv2d_forward(x, p), w); };
  SoftmaxLoss dummy;  // silence unused warnings on some compilers
  (void)dummy;

  Tensor4 y = conv2d_forward(x, p);
  ConvGrads g = conv2d_backward(x, p, w);

  auto fd_x = gradcheck::finite_diff(x.data(), x.size(), loss);
  CHECK(gradcheck::all_close(g.grad_x.data(), fd_x));
  auto fd_w = gradcheck::finite_diff(p.weight.data(), p.weight.size(), loss);
  CHECK(gradcheck::all_close(g.grad_weight.data(), fd_w));
  auto fd_b = gradcheck::finite_diff(p.bias.data(), p.bias.size(), loss);
  CHECK(gradcheck::all_close(g.grad_bias.data(), fd_b));
  CHECK(y.dims() == w.dims());
}

TEST_CASE("conv2d strided gradcheck") {
  Rng rng(43);
  Tensor4 x = Tensor4::randn({2, 2, 7, 7}, 0.6f, rng);
  ConvParams p = make_conv(2, 2, 3, 2, 1, false, rng);
  Tensor4 y0 = conv2d_forward(x, p);
  Tensor4 w = Tensor4::randn(y0.dims(), 1.0f, rng);
  auto loss = [&]() { return gradcheck::weighted_sum(conv2d_forward(x, p), w); };
  ConvGrads g = conv2d_backward(x, p, w);
  auto fd_x = gradcheck::finite_diff(x.data(), x.size(), loss);
  CHECK(gradcheck::all_close(g.grad_x.data(), fd_x));
  auto fd_w = gradcheck::finite_diff(p.weight.data(), p.weight.size(), loss);
  CHECK(gradcheck::all_close(g.grad_weight.data(), fd_w));
  CHECK(g.grad_bias.empty());
}

TEST_CASE("maxpool picks window maxima (worked 4x4 example)") {
  // input 0..15 row-major; 3x3 windows stride 2 with ceil-mode edges
  std::vector<float> data(16);
  for (int i = 0; i < 16; ++i) data[i] = static_cast<float>(i);
  Tensor4 x = Tensor4::from_data({1, 1, 4, 4}, data);
  PoolResult r = maxpool_forward(x, 3, 2);
  REQUIRE(r.out.dims() == Dims4{1, 1, 2, 2});
  CHECK(r.out.at(0, 0, 0, 0) == 10.0f);
  CHECK(r.out.at(0, 0, 0, 1) == 11.0f);
  CHECK(r.out.at(0, 0, 1, 0) == 14.0f);
  CHECK(r.out.at(0, 0, 1, 1) == 15.0f);
  CHECK(r.argmax == std::vector<std::int64_t>{10, 11, 14, 15});
}

TEST_CASE("maxpool backward scatters and accumulates") {
  // constant input: ties resolve to the first (lowest-offset) element, and
  // overlapping windows accumulate into shared winners
  Tensor4 x = Tensor4::full({1, 1, 4, 4}, 2.0f);
  PoolResult r = maxpool_forward(x, 3, 2);
  Tensor4 go = Tensor4::full(r.out.dims(), 1.0f);
  Tensor4 gx = maxpool_backward(r.argmax, go, x.dims());
  double total = 0.0;
  for (std::int64_t i = 0; i < gx.size(); ++i) total += gx.data()[i];
  CHECK(total == doctest::Approx(4.0));  // mass conserved

  // distinct values: gradient lands exactly on the argmax offsets
  std::vector<float> data(16);
  for (int i = 0; i < 16; ++i) data[i] = static_cast<float>(i);
  Tensor4 x2 = Tensor4::from_data({1, 1, 4, 4}, data);
  PoolResult r2 = maxpool_forward(x2, 3, 2);
  Tensor4 go2 = Tensor4::from_data({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  Tensor4 gx2 = maxpool_backward(r2.argmax, go2, x2.dims());
  CHECK(gx2.data()[10] == 1.0f);
  CHECK(gx2.data()[11] == 2.0f);
  CHECK(gx2.data()[14] == 3.0f);
  CHECK(gx2.data()[15] == 4.0f);
  CHECK(gx2.data()[0] == 0.0f);
}

TEST_CASE("maxpool matches pool_out_size over the network trace") {
  Rng rng(5);
  Tensor4 x = Tensor4::randn({1, 4, 113, 113}, 1.0f, rng);
  PoolResult r = maxpool_forward(x, 3, 2);
  CHECK(r.out.dims() == Dims4{1, 4, 56, 56});
}

TEST_CASE("global average pool forward/backward") {
  Tensor4 x = Tensor4::zeros({1, 2, 2, 2});
  x.at(0, 0, 0, 0) = 1.0f;
  x.at(0, 0, 0, 1) = 2.0f;
  x.at(0, 0, 1, 0) = 3.0f;
  x.at(0, 0, 1, 1) = 4.0f;
  x.at(0, 1, 0, 0) = -8.0f;
  Tensor4 y = global_avgpool_forward(x);
  REQUIRE(y.dims() == Dims4{1, 2, 1, 1});
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(2.5));
  CHECK(y.at(0, 1, 0, 0) == doctest::Approx(-2.0));

  Tensor4 go = Tensor4::from_data({1, 2, 1, 1}, {4.0f, 8.0f});
  Tensor4 gx = global_avgpool_backward(go, x.dims());
  for (int yy = 0; yy < 2; ++yy)
    for (int xx = 0; xx < 2; ++xx) {
      CHECK(gx.at(0, 0, yy, xx) == doctest::Approx(1.0));
      CHECK(gx.at(0, 1, yy, xx) == doctest::Approx(2.0));
    }
}

TEST_CASE("batchnorm train output has zero mean / unit variance per channel") {
  Rng rng(6);
  Tensor4 x = Tensor4::randn({4, 3, 5, 5}, 2.0f, rng);
  for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] += 1.5f;
  BatchNormParams p = BatchNormParams::init(3);
  Tensor4 y = batchnorm_forward(x, p, BnMode::train);
  const int m = 4 * 5 * 5;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int yy = 0; yy < 5; ++yy)
        for (int xx = 0; xx < 5; ++xx) {
          const double v = y.at(n, c, yy, xx);
          sum += v;
          sumsq += v * v;
        }
    CHECK(std::fabs(sum / m) < 1e-4);
    CHECK(sumsq / m == doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("batchnorm running stats update with momentum 0.1") {
  Tensor4 x = Tensor4::zeros({2, 1, 1, 2});
  x.at(0, 0, 0, 0) = 1.0f;
  x.at(0, 0, 0, 1) = 2.0f;
  x.at(1, 0, 0, 0) = 3.0f;
  x.at(1, 0, 0, 1) = 6.0f;
  BatchNormParams p = BatchNormParams::init(1);
  batchnorm_forward(x, p, BnMode::train);
  // batch mean 3, biased var = ((−2)²+(−1)²+0²+3²)/4 = 3.5,
  // unbiased var = 3.5·4/3 = 14/3
  CHECK(p.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 3.0));
  CHECK(p.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 14.0 / 3.0));

  // eval mode uses the running stats, not batch stats
  Tensor4 y = batchnorm_forward(x, p, BnMode::eval);
  const double expect =
      (1.0 - p.running_mean[0]) / std::sqrt(p.running_var[0] + 1e-5);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("batchnorm gradients match finite differences") {
  Rng rng(7);
  Tensor4 x = Tensor4::randn({4, 3, 5, 5}, 1.0f, rng);
  BatchNormParams p = BatchNormParams::init(3);
  for (int c = 0; c < 3; ++c) {
    p.gamma[c] = 0.5f + 0.3f * c;
    p.beta[c] = -0.2f + 0.1f * c;
  }
  Tensor4 w = Tensor4::randn({4, 3, 5, 5}, 1.0f, rng);

  auto loss = [&]() {
    BatchNormParams q = p;  // keep running stats untouched across probes
    return gradcheck::weighted_sum(batchnorm_forward(x, q, BnMode::train), w);
  };
  BnGrads g = batchnorm_backward(x, p, w);
  auto fd_x = gradcheck::finite_diff(x.data(), x.size(), loss);
  CHECK(gradcheck::all_close(g.grad_x.data(), fd_x, 2e-3, 2e-4));
  auto fd_gamma = gradcheck::finite_diff(p.gamma.data(), p.gamma.size(), loss);
  CHECK(gradcheck::all_close(g.grad_gamma.data(), fd_gamma));
  auto fd_beta = gradcheck::finite_diff(p.beta.data(), p.beta.size(), loss);
  CHECK(gradcheck::all_close(g.grad_beta.data(), fd_beta));

  // grad_beta is the per-channel sum of grad_out — closed-form oracle
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int yy = 0; yy < 5; ++yy)
        for (int xx = 0; xx < 5; ++xx) s += w.at(n, c, yy, xx);
    CHECK(g.grad_beta[c] == doctest::Approx(s).epsilon(1e-4));
  }
}

TEST_CASE("relu forward and backward") {
  Tensor4 x = Tensor4::from_data({1, 1, 1, 4}, {-2.0f, -0.5f, 0.5f, 3.0f});
  Tensor4 y = relu_forward(x);
  CHECK(y.vec() == std::vector<float>{0.0f, 0.0f, 0.5f, 3.0f});

  Tensor4 go = Tensor4::full({1, 1, 1, 4}, 1.0f);
  Tensor4 gx = relu_backward(x, go);
  CHECK(gx.vec() == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});

  // FD check away from the kink (|x| > 1e-2 step)
  Rng rng(8);
  Tensor4 xr = Tensor4::randn({2, 3, 4, 4}, 1.0f, rng);
  for (std::int64_t i = 0; i < xr.size(); ++i)
    if (std::fabs(xr.data()[i]) < 5e-2f) xr.data()[i] = 0.2f;
  Tensor4 w = Tensor4::randn(xr.dims(), 1.0f, rng);
  auto loss = [&]() { return gradcheck::weighted_sum(relu_forward(xr), w); };
  Tensor4 g = relu_backward(xr, w);
  auto fd = gradcheck::finite_diff(xr.data(), xr.size(), loss);
  CHECK(gradcheck::all_close(g.data(), fd));
}

TEST_CASE("concat_channels stacks and split inverts") {
  Rng rng(9);
  std::vector<Tensor4> parts;
  for (int i = 0; i < 4; ++i)
    parts.push_back(Tensor4::randn({2, 32, 3, 3}, 1.0f, rng));
  std::vector<const Tensor4*> ptrs;
  for (auto& t : parts) ptrs.push_back(&t);
  Tensor4 cat = concat_channels(ptrs);
  REQUIRE(cat.dims() == Dims4{2, 128, 3, 3});
  for (int i = 0; i < 4; ++i)
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 32; ++c)
        CHECK(cat.at(n, 32 * i + c, 1, 2) == parts[i].at(n, c, 1, 2));

  std::vector<Tensor4> back = split_channels(cat, {32, 32, 32, 32});
  REQUIRE(back.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(back[i].vec() == parts[i].vec());

  CHECK_THROWS_AS(split_channels(cat, std::vector<int>{32, 32}),
                  std::invalid_argument);
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(10);
  Tensor4 x = Tensor4::randn({2, 7, 1, 1}, 0.8f, rng);
  LinearParams p;
  p.in_features = 7;
  p.out_features = 3;
  p.weight.resize(21);
  p.bias.resize(3);
  for (auto& v : p.weight) v = static_cast<float>(rng.normal(0.4));
  for (auto& v : p.bias) v = static_cast<float>(rng.normal(0.4));
  Tensor4 w = Tensor4::randn({2, 3, 1, 1}, 1.0f, rng);

  auto loss = [&]() { return gradcheck::weighted_sum(linear_forward(x, p), w); };
  LinearGrads g = linear_backward(x, p, w);
  auto fd_x = gradcheck::finite_diff(x.data(), x.size(), loss);
  CHECK(gradcheck::all_close(g.grad_x.data(), fd_x));
  auto fd_w = gradcheck::finite_diff(p.weight.data(), p.weight.size(), loss);
  CHECK(gradcheck::all_close(g.grad_weight.data(), fd_w));
  auto fd_b = gradcheck::finite_diff(p.bias.data(), p.bias.size(), loss);
  CHECK(gradcheck::all_close(g.grad_bias.data(), fd_b));
}

TEST_CASE("linear worked example") {
  // y = W x + b with tiny integers
  Tensor4 x = Tensor4::from_data({1, 2, 1, 1}, {1.0f, 2.0f});
  LinearParams p;
  p.in_features = 2;
  p.out_features = 2;
  p.weight = {1.0f, 2.0f, 3.0f, 4.0f};  // rows: [1 2], [3 4]
  p.bias = {10.0f, 20.0f};
  Tensor4 y = linear_forward(x, p);
  CHECK(y.at(0, 0, 0, 0) == 15.0f);  // 1+4+10
  CHECK(y.at(0, 1, 0, 0) == 31.0f);  // 3+8+20
}

TEST_CASE("softmax: uniform logits, dominance, row sums") {
  Tensor4 u = Tensor4::full({1, 50, 1, 1}, 0.7f);
  Tensor4 pu = softmax(u);
  for (int c = 0; c < 50; ++c)
    CHECK(pu.at(0, c, 0, 0) == doctest::Approx(0.02).epsilon(1e-6));

  Tensor4 d = Tensor4::from_data({1, 2, 1, 1}, {10.0f, -10.0f});
  SoftmaxLoss dl = softmax_cross_entropy(d, {0});
  CHECK(dl.loss < 1e-4);

  // numerically extreme logits still produce unit row sums
  Rng rng(11);
  Tensor4 big = Tensor4::zeros({3, 6, 1, 1});
  for (std::int64_t i = 0; i < big.size(); ++i)
    big.data()[i] = static_cast<float>(rng.normal(1.0) * 1e4);
  Tensor4 pb = softmax(big);
  for (int n = 0; n < 3; ++n) {
    double s = 0.0;
    for (int c = 0; c < 6; ++c) s += pb.at(n, c, 0, 0);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax cross-entropy: uniform loss is ln C") {
  Tensor4 u = Tensor4::full({2, 50, 1, 1}, 0.0f);
  SoftmaxLoss r = softmax_cross_entropy(u, {3, 17});
  CHECK(r.loss == doctest::Approx(std::log(50.0)).epsilon(1e-6));
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  Rng rng(12);
  Tensor4 logits = Tensor4::randn({3, 5, 1, 1}, 1.0f, rng);
  std::vector<int> labels{1, 4, 0};
  auto loss = [&]() { return softmax_cross_entropy(logits, labels).loss; };
  SoftmaxLoss r = softmax_cross_entropy(logits, labels);
  auto fd = gradcheck::finite_diff(logits.data(), logits.size(), loss, 1e-3);
  CHECK(gradcheck::all_close(r.grad_logits.data(), fd));

  // gradient rows sum to zero (probs sum 1, one-hot sums 1)
  for (int n = 0; n < 3; ++n) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) s += r.grad_logits.at(n, c, 0, 0);
    CHECK(std::fabs(s) < 1e-6);
  }
}

TEST_CASE("layer input validation") {
  Rng rng(13);
  Tensor4 x = Tensor4::randn({1, 3, 8, 8}, 1.0f, rng);
  ConvParams p = make_conv(4, 2, 3, 1, 1, false, rng);
  CHECK_THROWS_AS(conv2d_forward(x, p), std::invalid_argument);

  BatchNormParams bn = BatchNormParams::init(5);
  CHECK_THROWS_AS(batchnorm_forward(x, bn, BnMode::train), std::invalid_argument);

  Tensor4 bad_logits = Tensor4::zeros({1, 3, 2, 2});
  CHECK_THROWS_AS(softmax(bad_logits), std::invalid_argument);
  Tensor4 logits = Tensor4::zeros({2, 3, 1, 1});
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 3}), std::out_of_range);
}
