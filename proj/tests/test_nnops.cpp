#include <doctest.h>
#include <omp.h>

#include <array>
#include <cmath>
#include <limits>

#include "pyconv/nnops.hpp"
#include "pyconv/rng.hpp"

using namespace pyconv;

namespace {

// Independent 2D oracle: plain nested loops over the textbook definition.
Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, const ConvSpec& s) {
  const std::int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::int64_t co = s.out_channels, g = s.groups, cig = ci / g, cog = co / g;
  const Dims od = s.output_dims(x.dims());
  Tensor<double> y(od);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t o = 0; o < co; ++o) {
      const std::int64_t grp = o / cog;
      for (std::int64_t oy = 0; oy < od[2]; ++oy) {
        for (std::int64_t ox = 0; ox < od[3]; ++ox) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < cig; ++i) {
            for (int ky = 0; ky < s.kernel[0]; ++ky) {
              for (int kx = 0; kx < s.kernel[1]; ++kx) {
                const std::int64_t iy = oy * s.stride[0] - s.padding[0] + ky * s.dilation[0];
                const std::int64_t ix = ox * s.stride[1] - s.padding[1] + kx * s.dilation[1];
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x.at({b, grp * cig + i, iy, ix}) * w.at({o, i, ky, kx});
              }
            }
          }
          y.at({b, o, oy, ox}) = acc;
        }
      }
    }
  }
  return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.dims() == b.dims());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv spec shape law and validation") {
  const auto s = ConvSpec::conv2d(8, 16, 3, 2, 1, 4, 1);
  CHECK(s.weight_dims() == Dims{16, 2, 3, 3});
  CHECK(s.output_spatial({7, 8}) == Dims{4, 4});
  CHECK(ConvSpec::conv2d(4, 4, 3, 1, 2, 1, 2).output_spatial({9, 9}) == Dims{9, 9});
  CHECK_THROWS_AS(ConvSpec::conv2d(6, 8, 3, 1, 1, 4).check(), ShapeError);
  CHECK_THROWS_AS(ConvSpec::conv2d(8, 6, 3, 1, 1, 4).check(), ShapeError);
  Tensor<float> x({1, 3, 5, 5});
  CHECK_THROWS_AS(conv_forward<float>(x, Tensor<float>({4, 4, 3, 3}), nullptr, ConvSpec::conv2d(4, 4, 3)), ShapeError);
}

TEST_CASE("1x1 identity convolution copies the input") {
  const auto x = random_normal<double>({2, 5, 4, 3}, 1);
  Tensor<double> w({5, 5, 1, 1});
  for (int c = 0; c < 5; ++c) w.at({c, c, 0, 0}) = 1.0;
  const auto spec = ConvSpec::conv2d(5, 5, 1);
  CHECK(conv_forward<double>(x, w, nullptr, spec) == x);

  const auto go = random_normal<double>({2, 5, 4, 3}, 2);
  CHECK(conv_backward<double>(x, w, spec, go).input == go);
}

TEST_CASE("all-ones 3x3 kernel over all-ones 5x5 input") {
  Tensor<float> x({1, 1, 5, 5});
  x.fill(1.0f);
  Tensor<float> w({1, 1, 3, 3});
  w.fill(1.0f);
  const auto y = conv_forward<float>(x, w, nullptr, ConvSpec::conv2d(1, 1, 3, 1, 1));
  CHECK(y.at({0, 0, 2, 2}) == 9.0f);
  CHECK(y.at({0, 0, 0, 0}) == 4.0f);
  CHECK(y.at({0, 0, 0, 2}) == 6.0f);
}

TEST_CASE("bias is added to every output element") {
  Tensor<double> x({1, 2, 3, 3});
  const auto w = random_normal<double>({3, 2, 1, 1}, 3);
  Tensor<double> b({3}, {1.0, -2.0, 0.5});
  const auto y = conv_forward<double>(x, w, &b, ConvSpec::conv2d(2, 3, 1));
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t p = 0; p < 9; ++p) CHECK(y[c * 9 + p] == b[c]);
  }
}

TEST_CASE("grouped conv equals concat of per-group convs") {
  const auto x = random_normal<double>({2, 8, 5, 5}, 11);
  const auto spec = ConvSpec::conv2d(8, 6, 3, 1, 1, 2);
  const auto w = random_normal<double>(spec.weight_dims(), 12);
  const auto y = conv_forward<double>(x, w, nullptr, spec);

  std::vector<Tensor<double>> parts;
  for (int g = 0; g < 2; ++g) {
    const auto xs = slice_channels(x, 4 * g, 4);
    const Tensor<double> ws({3, 4, 3, 3}, std::vector<double>(w.raw() + g * 108, w.raw() + (g + 1) * 108));
    parts.push_back(conv_forward<double>(xs, ws, nullptr, ConvSpec::conv2d(4, 3, 3, 1, 1, 1)));
  }
  CHECK(concat_channels<double>(parts) == y);
}

TEST_CASE("fast conv matches the serial direct conv and a naive oracle") {
  int checked = 0;
  for (std::uint64_t t = 0; t < 60; ++t) {
    const std::uint64_t s = rng::mix(2024, t);
    auto pick = [&](std::uint64_t k, int n) { return static_cast<int>(rng::uniform(s, k) * n); };
    const std::int64_t g = std::int64_t{1} << pick(1, 3);
    const std::int64_t ci = g * (1 + pick(2, 3)), co = g * (1 + pick(3, 3));
    const int k = 1 + 2 * pick(4, 3), stride = 1 + pick(5, 2), dil = 1 + pick(6, 2);
    const int pad = pick(7, 2) ? (k - 1) / 2 * dil : pick(8, 3);
    const std::int64_t h = 3 + pick(9, 8), w = 3 + pick(10, 8);
    if (std::min(h, w) + 2 * pad < dil * (k - 1) + 1) continue;
    const auto spec = ConvSpec::conv2d(ci, co, k, stride, pad, g, dil);
    const auto x = random_normal<double>({1 + pick(11, 2), ci, h, w}, rng::mix(s, 20));
    const auto wt = random_normal<double>(spec.weight_dims(), rng::mix(s, 21));
    const auto fast = conv_forward<double>(x, wt, nullptr, spec);
    const auto direct = reference::conv_forward_direct<double>(x, wt, nullptr, spec);
    CHECK(fast == direct);
    CHECK(max_abs_diff(fast, naive_conv2d(x, wt, spec)) < 1e-12);

    const auto go = random_normal<double>(fast.dims(), rng::mix(s, 22));
    const auto gf = conv_backward<double>(x, wt, spec, go, true);
    const auto gd = reference::conv_backward_direct<double>(x, wt, spec, go, true);
    CHECK(max_abs_diff(gf.input, gd.input) < 1e-10);
    CHECK(max_abs_diff(gf.weights, gd.weights) < 1e-10);
    CHECK(gf.bias == gd.bias);
    ++checked;
  }
  CHECK(checked >= 50);
}

TEST_CASE("conv results do not depend on the thread count") {
  const auto spec = ConvSpec::conv2d(16, 24, 5, 2, 2, 4);
  const auto x = random_normal<float>({3, 16, 13, 11}, 31);
  const auto w = random_normal<float>(spec.weight_dims(), 32);
  const auto go = random_normal<float>(spec.output_dims(x.dims()), 33);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto y1 = conv_forward<float>(x, w, nullptr, spec);
  const auto g1 = conv_backward<float>(x, w, spec, go, true);
  omp_set_num_threads(4);
  const auto y4 = conv_forward<float>(x, w, nullptr, spec);
  const auto g4 = conv_backward<float>(x, w, spec, go, true);
  omp_set_num_threads(saved);
  CHECK(y1 == y4);
  CHECK(g1.input == g4.input);
  CHECK(g1.weights == g4.weights);
  CHECK(g1.bias == g4.bias);
}

TEST_CASE("zero grad_output gives zero conv gradients") {
  const auto spec = ConvSpec::conv2d(4, 4, 3, 1, 1, 2);
  const auto x = random_normal<double>({1, 4, 5, 5}, 1);
  const auto w = random_normal<double>(spec.weight_dims(), 2);
  const auto g = conv_backward<double>(x, w, spec, Tensor<double>({1, 4, 5, 5}), true);
  for (double v : g.input.data()) CHECK(v == 0.0);
  for (double v : g.weights.data()) CHECK(v == 0.0);
  for (double v : g.bias.data()) CHECK(v == 0.0);
}

TEST_CASE("3D conv with Kt=1 equals 2D conv per frame") {
  const auto spec3 = ConvSpec::conv3d(4, 6, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}, 2);
  const auto spec2 = ConvSpec::conv2d(4, 6, 3, 1, 1, 2);
  const auto x = random_normal<double>({1, 4, 3, 5, 5}, 5);
  const auto w3 = random_normal<double>(spec3.weight_dims(), 6);
  const auto w2 = w3.reshaped(spec2.weight_dims());
  const auto y = conv3d_forward<double>(x, w3, nullptr, spec3);
  for (std::int64_t t = 0; t < 3; ++t) {
    Tensor<double> frame({1, 4, 5, 5});
    for (std::int64_t c = 0; c < 4; ++c) {
      for (std::int64_t p = 0; p < 25; ++p) frame[c * 25 + p] = x[(c * 3 + t) * 25 + p];
    }
    const auto y2 = conv_forward<double>(frame, w2, nullptr, spec2);
    for (std::int64_t c = 0; c < 6; ++c) {
      for (std::int64_t p = 0; p < 25; ++p) CHECK(y[(c * 3 + t) * 25 + p] == y2[c * 25 + p]);
    }
  }
  CHECK_THROWS_AS(conv3d_forward<double>(Tensor<double>({1, 4, 5, 5}), w2, nullptr, spec2), ShapeError);
}

TEST_CASE("depthwise 3D conv matches a per-channel oracle") {
  const std::int64_t c = 3;
  const auto spec = ConvSpec::conv3d(c, c, {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, c);
  const auto x = random_normal<double>({1, c, 4, 6, 6}, 7);
  const auto w = random_normal<double>(spec.weight_dims(), 8);
  const auto y = conv3d_forward<double>(x, w, nullptr, spec);
  CHECK(y.dims() == Dims{1, c, 4, 3, 3});
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t t = 0; t < 4; ++t) {
      for (std::int64_t oy = 0; oy < 3; ++oy) {
        for (std::int64_t ox = 0; ox < 3; ++ox) {
          double acc = 0.0;
          for (int kt = 0; kt < 3; ++kt) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const std::int64_t it = t - 1 + kt, iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
                if (it < 0 || it >= 4 || iy < 0 || iy >= 6 || ix < 0 || ix >= 6) continue;
                acc += x.at({0, ch, it, iy, ix}) * w.at({ch, 0, kt, ky, kx});
              }
            }
          }
          CHECK(std::abs(y.at({0, ch, t, oy, ox}) - acc) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("max pool worked example and tie rule") {
  Tensor<float> x({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
  const auto r = maxpool_forward<float>(x, PoolSpec::pool2d(2, 2, 0));
  CHECK(r.output == Tensor<float>({1, 1, 2, 2}, {5, 7, 13, 15}));

  Tensor<float> c({1, 1, 4, 4});
  c.fill(3.0f);
  const auto rc = maxpool_forward<float>(c, PoolSpec::pool2d(2, 2, 0));
  for (float v : rc.output.data()) CHECK(v == 3.0f);
  CHECK(rc.argmax == std::vector<std::int64_t>{0, 2, 8, 10});
  Tensor<float> go({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto gi = maxpool_backward<float>(c.dims(), rc.argmax, go);
  CHECK(gi[0] == 1.0f);
  CHECK(gi[2] == 2.0f);
  CHECK(gi[8] == 3.0f);
  CHECK(gi[10] == 4.0f);
  CHECK(gi[1] == 0.0f);
}

TEST_CASE("padded max pool matches a nested-loop oracle") {
  const auto x = random_normal<double>({2, 3, 7, 6}, 9);
  const auto spec = PoolSpec::pool2d(3, 2, 1);
  const auto y = maxpool_forward<double>(x, spec).output;
  CHECK(y.dims() == Dims{2, 3, 4, 3});
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t oy = 0; oy < 4; ++oy) {
        for (std::int64_t ox = 0; ox < 3; ++ox) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::int64_t iy = oy * 2 - 1; iy <= oy * 2 + 1; ++iy) {
            for (std::int64_t ix = ox * 2 - 1; ix <= ox * 2 + 1; ++ix) {
              if (iy >= 0 && iy < 7 && ix >= 0 && ix < 6) m = std::max(m, x.at({n, c, iy, ix}));
            }
          }
          CHECK(y.at({n, c, oy, ox}) == m);
        }
      }
    }
  }
}

TEST_CASE("adaptive average pooling") {
  const auto x = random_normal<double>({1, 2, 6, 5}, 4);
  CHECK(max_abs_diff(adaptive_avg_pool<double>(x, {6, 5}), x) < 1e-15);

  Tensor<double> c({1, 2, 60, 60});
  c.fill(2.5);
  const auto p = adaptive_avg_pool<double>(c, {9, 9});
  CHECK(p.dims() == Dims{1, 2, 9, 9});
  for (double v : p.data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));

  const auto g = global_avg_pool<double>(x);
  const auto one = adaptive_avg_pool<double>(x, {1, 1});
  for (std::int64_t ch = 0; ch < 2; ++ch) {
    double mean = 0.0;
    for (std::int64_t i = 0; i < 30; ++i) mean += x[ch * 30 + i];
    mean /= 30.0;
    CHECK(g[ch] == doctest::Approx(mean).epsilon(1e-14));
    CHECK(one[ch] == doctest::Approx(mean).epsilon(1e-14));
  }

  // Bin i spans [floor(i*In/Out), ceil((i+1)*In/Out)); 5 -> 3 gives [0,2) [1,4) [3,5).
  Tensor<double> r({1, 1, 1, 5}, {1, 2, 3, 4, 5});
  const auto q = adaptive_avg_pool<double>(r, {1, 3});
  CHECK(q[0] == doctest::Approx(1.5));
  CHECK(q[1] == doctest::Approx(3.0));
  CHECK(q[2] == doctest::Approx(4.5));
}

TEST_CASE("batch norm statistics") {
  const std::int64_t c = 3;
  Tensor<double> gamma({c}, {1.0, 2.0, 0.5});
  Tensor<double> beta({c}, {0.0, -1.0, 3.0});
  Tensor<double> rm({c}), rv({c});
  rv.fill(1.0);
  const auto x = random_normal<double>({4, c, 5, 5}, 21, 3.0);
  const auto y = batchnorm_forward<double>(x, gamma, beta, rm, rv, BatchNormMode::train);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double m = 0.0, v = 0.0, xm = 0.0, xv = 0.0;
    for (std::int64_t n = 0; n < 4; ++n) {
      for (std::int64_t p = 0; p < 25; ++p) {
        m += y[(n * c + ch) * 25 + p];
        xm += x[(n * c + ch) * 25 + p];
      }
    }
    m /= 100.0;
    xm /= 100.0;
    for (std::int64_t n = 0; n < 4; ++n) {
      for (std::int64_t p = 0; p < 25; ++p) {
        v += std::pow(y[(n * c + ch) * 25 + p] - m, 2);
        xv += std::pow(x[(n * c + ch) * 25 + p] - xm, 2);
      }
    }
    v /= 100.0;
    CHECK(m == doctest::Approx(beta[ch]).epsilon(1e-9));
    CHECK(v == doctest::Approx(gamma[ch] * gamma[ch]).epsilon(1e-3));
    CHECK(rm[ch] == doctest::Approx(kBatchNormMomentum * xm).epsilon(1e-12));
    CHECK(rv[ch] == doctest::Approx(1.0 - kBatchNormMomentum + kBatchNormMomentum * xv / 99.0).epsilon(1e-12));
  }
}

TEST_CASE("batch norm on normalized input is near identity") {
  Tensor<double> gamma({2}), beta({2}), rm({2}), rv({2});
  gamma.fill(1.0);
  rv.fill(1.0);
  Tensor<double> x({2, 2, 1, 1}, {1.0, 1.0, -1.0, -1.0});
  const auto y = batchnorm_forward<double>(x, gamma, beta, rm, rv, BatchNormMode::train);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - x[i]) < 1e-5);

  Tensor<double> rm0({2}), rv1({2});
  rv1.fill(1.0);
  const auto e = batchnorm_forward<double>(x, gamma, beta, rm0, rv1, BatchNormMode::eval);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(std::abs(e[i] - x[i]) < 1e-5);
  CHECK(rm0[0] == 0.0);
}

TEST_CASE("relu forward and masked backward") {
  Tensor<double> x({1, 4}, {-2.0, -0.5, 0.5, 3.0});
  CHECK(relu_forward<double>(x) == Tensor<double>({1, 4}, {0.0, 0.0, 0.5, 3.0}));
  Tensor<double> g({1, 4}, {1.0, 2.0, 3.0, 4.0});
  CHECK(relu_backward<double>(x, g) == Tensor<double>({1, 4}, {0.0, 0.0, 3.0, 4.0}));
}

TEST_CASE("align-corners bilinear upsample") {
  const auto x = random_normal<double>({1, 2, 3, 4}, 3);
  CHECK(max_abs_diff(bilinear_upsample<double>(x, 3, 4), x) < 1e-15);

  Tensor<double> s({1, 1, 2, 2}, {1.0, 2.0, 3.0, 8.0});
  const auto u = bilinear_upsample<double>(s, 3, 3);
  CHECK(u.at({0, 0, 1, 1}) == doctest::Approx(3.5));
  CHECK(u.at({0, 0, 0, 0}) == 1.0);
  CHECK(u.at({0, 0, 2, 2}) == 8.0);

  Tensor<double> c({1, 1, 3, 3});
  c.fill(-1.25);
  const auto big = bilinear_upsample<double>(c, 7, 11);
  for (double v : big.data()) CHECK(v == doctest::Approx(-1.25));
}

TEST_CASE("linear layer") {
  const auto x = random_normal<double>({3, 4}, 1);
  Tensor<double> eye({4, 4});
  for (int i = 0; i < 4; ++i) eye.at({i, i}) = 1.0;
  CHECK(linear_forward<double>(x, eye, nullptr) == x);

  Tensor<double> zero({2, 4});
  const auto w = random_normal<double>({3, 4}, 2);
  Tensor<double> b({3}, {1.0, 2.0, 3.0});
  const auto y = linear_forward<double>(zero, w, &b);
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t k = 0; k < 3; ++k) CHECK(y.at({n, k}) == b[k]);
  }
}

TEST_CASE("softmax cross-entropy") {
  Tensor<double> u({2, 10});
  const auto r = softmax_cross_entropy<double>(u, {3, 7});
  CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Tensor<double> d({1, 10});
  d[4] = 100.0;
  CHECK(softmax_cross_entropy<double>(d, {4}).loss < 1e-30);

  const auto z = random_normal<double>({3, 5}, 8);
  const auto g = softmax_cross_entropy<double>(z, {0, 4, 2}).grad;
  for (std::int64_t n = 0; n < 3; ++n) {
    double s = 0.0;
    for (std::int64_t k = 0; k < 5; ++k) s += g[n * 5 + k];
    CHECK(std::abs(s) < 1e-15);
  }
  CHECK_THROWS_AS(softmax_cross_entropy<double>(z, {0, 5, 1}), ShapeError);
  CHECK_THROWS_AS(softmax_cross_entropy<double>(z, {0, 1}), ShapeError);
}

TEST_CASE("dropout") {
  const auto x = random_normal<double>({4, 50}, 3);
  CHECK(dropout_forward<double>(x, 0.0, 1) == x);
  const auto y = dropout_forward<double>(x, 0.5, 9);
  CHECK(y == dropout_forward<double>(x, 0.5, 9));
  int zeros = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(y[i] == doctest::Approx(2.0 * x[i]));
    }
  }
  CHECK(zeros > 60);
  CHECK(zeros < 140);
  CHECK_THROWS(dropout_forward<double>(x, 1.0, 1));
}
