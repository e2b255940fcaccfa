#include <doctest.h>

#include <cmath>
#include <limits>

#include "edgeyolo/nn/layers.hpp"
#include "edgeyolo/simd/kernels.hpp"
#include "support.hpp"

using namespace edgeyolo;
using namespace edgeyolo::nn;
using testing::random_tensor;

namespace {

// Direct 7-loop convolution with zero padding k/2.
Tensor<double> conv_oracle(const Tensor<double>& x, const ConvParams<double>& p) {
  const Shape s = x.shape();
  const int pad = p.kernel / 2;
  const int ho = (s.h + 2 * pad - p.kernel) / p.stride + 1;
  const int wo = (s.w + 2 * pad - p.kernel) / p.stride + 1;
  Tensor<double> y(Shape{s.n, p.filters, ho, wo});
  for (int b = 0; b < s.n; ++b) {
    for (int f = 0; f < p.filters; ++f) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = p.bias[f];
          for (int c = 0; c < s.c; ++c) {
            for (int ky = 0; ky < p.kernel; ++ky) {
              for (int kx = 0; kx < p.kernel; ++kx) {
                const int iy = oy * p.stride + ky - pad;
                const int ix = ox * p.stride + kx - pad;
                if (iy >= 0 && iy < s.h && ix >= 0 && ix < s.w) {
                  acc += p.weights.at(f, c, ky, kx) * x.at(b, c, iy, ix);
                }
              }
            }
          }
          y.at(b, f, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

template <class T>
ConvParams<T> random_conv(Rng& rng, int cin, int k, int s, int f) {
  ConvParams<T> p = ConvParams<T>::zeros(cin, k, s, f);
  p.weights = random_tensor<T>(rng, p.weights.shape());
  for (T& b : p.bias) {
    b = static_cast<T>(rng.uniform(-0.5, 0.5));
  }
  return p;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

struct ConvCase {
  int n, cin, h, w, k, s, f;
};

const ConvCase kConvCases[] = {
    {1, 3, 8, 8, 3, 2, 4}, {2, 2, 7, 5, 3, 1, 3}, {1, 4, 6, 6, 1, 1, 5},
    {1, 3, 9, 9, 5, 1, 2}, {2, 5, 5, 7, 1, 2, 3}, {1, 1, 1, 1, 3, 1, 1},
};

// Scalar loss L = sum(w_i * y_i) so dL/dy = w.
std::vector<double> loss_weights(const Tensor<double>& y, std::uint64_t seed) {
  return testing::projection(y.size(), seed);
}

}  // namespace

TEST_CASE("conv output shapes") {
  CHECK(conv_output_shape({1, 3, 416, 416}, 3, 2, 32) == Shape{1, 32, 208, 208});
  CHECK(conv_output_shape({1, 64, 104, 104}, 3, 1, 64) == Shape{1, 64, 104, 104});
  CHECK(conv_output_shape({2, 64, 13, 13}, 1, 1, 255) == Shape{2, 255, 13, 13});
  CHECK_THROWS_AS(conv_output_shape({1, 3, 8, 8}, 2, 1, 4), ShapeError);
}

TEST_CASE("pool output shapes") {
  CHECK(pool_output_shape({1, 64, 104, 104}, 2, 2) == Shape{1, 64, 52, 52});
  CHECK(pool_output_shape({1, 128, 52, 52}, 13, 1) == Shape{1, 128, 52, 52});
  CHECK(pool_output_shape({1, 8, 7, 7}, 2, 2) == Shape{1, 8, 3, 3});
}

TEST_CASE("conv2d matches direct convolution") {
  Rng rng(1);
  for (const ConvCase& c : kConvCases) {
    auto p = random_conv<double>(rng, c.cin, c.k, c.s, c.f);
    auto x = random_tensor<double>(rng, {c.n, c.cin, c.h, c.w});
    CHECK(max_abs_diff(conv2d(x, p), conv_oracle(x, p)) < 1e-12);
  }
}

TEST_CASE("float conv2d agrees across isa variants") {
  Rng rng(2);
  for (const ConvCase& c : kConvCases) {
    auto p = random_conv<float>(rng, c.cin, c.k, c.s, c.f);
    auto x = random_tensor<float>(rng, {c.n, c.cin, c.h, c.w});
    Tensor<float> ref;
    {
      simd::ScopedIsa scalar(simd::Isa::Scalar);
      ref = conv2d(x, p);
    }
    const Tensor<float> fast = conv2d(x, p);
    const double tol = 1e-5 * (c.cin * c.k * c.k);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      REQUIRE(std::abs(ref.values()[i] - fast.values()[i]) <= tol);
    }
  }
}

TEST_CASE("conv2d rejects mismatched inputs") {
  Rng rng(3);
  auto p = random_conv<float>(rng, 3, 3, 1, 4);
  CHECK_THROWS_AS(conv2d(Tensor<float>({1, 2, 5, 5}), p), ShapeError);
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(4);
  for (const ConvCase& c : kConvCases) {
    auto p = random_conv<double>(rng, c.cin, c.k, c.s, c.f);
    auto x = random_tensor<double>(rng, {c.n, c.cin, c.h, c.w});
    const auto w = loss_weights(conv2d(x, p), 99);
    auto loss = [&] { return testing::dot(conv2d(x, p).values(), w); };
    const Tensor<double> go(conv2d(x, p).shape(), w);
    std::vector<double> gw, gb;
    const Tensor<double> gx = conv2d_backward(x, p, go, gw, gb);
    CHECK(testing::max_grad_error(x.values(), gx.values(), loss) < 1e-6);
    CHECK(testing::max_grad_error(p.weights.values(), gw, loss) < 1e-6);
    CHECK(testing::max_grad_error(p.bias, gb, loss) < 1e-6);
  }
}

TEST_CASE("batch norm inference applies running statistics") {
  Rng rng(5);
  auto x = random_tensor<double>(rng, {2, 3, 4, 4});
  BatchNormParams<double> bn = BatchNormParams<double>::identity(3);
  bn.gamma = {1.5, -0.5, 2.0};
  bn.beta = {0.1, 0.2, -0.3};
  bn.running_mean = {0.2, -0.1, 0.0};
  bn.running_var = {0.5, 2.0, 1.0};
  const auto y = batch_norm(x, bn);
  for (int b = 0; b < 2; ++b) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 4; ++i) {
        const double want = bn.gamma[c] * (x.at(b, c, i, i) - bn.running_mean[c]) /
                                std::sqrt(bn.running_var[c] + bn.eps) +
                            bn.beta[c];
        CHECK(y.at(b, c, i, i) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("batch norm training statistics") {
  Rng rng(6);
  auto x = random_tensor<double>(rng, {3, 2, 3, 5}, -2.0, 3.0);
  auto bn = BatchNormParams<double>::identity(2);
  BatchStats<double> st;
  const auto y = batch_norm_train(x, bn, st);
  for (int c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    int cnt = 0;
    for (int b = 0; b < 3; ++b) {
      for (int i = 0; i < 15; ++i) {
        const double v = x.plane(b, c)[i];
        sum += v;
        sq += v * v;
        ++cnt;
      }
    }
    const double mean = sum / cnt;
    CHECK(st.mean[c] == doctest::Approx(mean));
    CHECK(st.var[c] == doctest::Approx(sq / cnt - mean * mean));
    double ysum = 0;
    for (int b = 0; b < 3; ++b) {
      for (int i = 0; i < 15; ++i) {
        ysum += y.plane(b, c)[i];
      }
    }
    CHECK(std::abs(ysum) < 1e-9);
  }
  update_running_stats(bn, st, 0.9);
  CHECK(bn.running_mean[0] == doctest::Approx(0.1 * st.mean[0]));
  CHECK(bn.running_var[1] == doctest::Approx(0.9 + 0.1 * st.var[1]));
}

TEST_CASE("batch norm backward matches finite differences") {
  Rng rng(7);
  auto x = random_tensor<double>(rng, {2, 3, 3, 4});
  auto bn = BatchNormParams<double>::identity(3);
  bn.gamma = {1.2, 0.7, -0.4};
  bn.beta = {0.0, 0.3, -0.1};
  bn.running_mean = {0.1, 0.0, -0.2};
  bn.running_var = {0.8, 1.3, 0.6};
  BatchStats<double> st;
  const auto w = testing::projection(x.size(), 8);
  const Tensor<double> go(x.shape(), w);

  SUBCASE("training mode") {
    auto loss = [&] {
      BatchStats<double> s;
      return testing::dot(batch_norm_train(x, bn, s).values(), w);
    };
    batch_norm_train(x, bn, st);
    std::vector<double> gg, gb;
    const auto gx = batch_norm_train_backward(x, bn, st, go, gg, gb);
    CHECK(testing::max_grad_error(x.values(), gx.values(), loss) < 1e-5);
    CHECK(testing::max_grad_error(bn.gamma, gg, loss) < 1e-6);
    CHECK(testing::max_grad_error(bn.beta, gb, loss) < 1e-6);
  }
  SUBCASE("inference mode") {
    auto loss = [&] { return testing::dot(batch_norm(x, bn).values(), w); };
    std::vector<double> gg, gb;
    const auto gx = batch_norm_backward(x, bn, go, gg, gb);
    CHECK(testing::max_grad_error(x.values(), gx.values(), loss) < 1e-6);
    CHECK(testing::max_grad_error(bn.gamma, gg, loss) < 1e-6);
    CHECK(testing::max_grad_error(bn.beta, gb, loss) < 1e-6);
  }
}

TEST_CASE("activations") {
  const Tensor<double> x({1, 1, 1, 5}, std::vector<double>{-2.0, -0.5, 0.0, 0.5, 3.0});
  const auto leaky = activate(x, Activation::Leaky);
  CHECK(leaky.values() == std::vector<double>{-0.2, -0.05, 0.0, 0.5, 3.0});
  const auto relu = activate(x, Activation::Relu);
  CHECK(relu.values() == std::vector<double>{0.0, 0.0, 0.0, 0.5, 3.0});
  CHECK(activate(x, Activation::Linear).values() == x.values());
  const auto mish = activate(x, Activation::Mish);
  for (std::size_t i = 0; i < 5; ++i) {
    const double v = x.values()[i];
    CHECK(mish.values()[i] ==
          doctest::Approx(v * std::tanh(std::log1p(std::exp(v)))).epsilon(1e-12));
  }
  CHECK(parse_activation("leaky") == Activation::Leaky);
  CHECK(!parse_activation("swish"));
  CHECK(activation_name(Activation::Mish) == "mish");
}

TEST_CASE("activation backward matches finite differences") {
  Rng rng(9);
  // Keep inputs away from the kinks at zero.
  auto x = random_tensor<double>(rng, {1, 2, 4, 4}, 0.05, 2.0);
  for (std::size_t i = 0; i < x.size(); i += 2) {
    x.values()[i] = -x.values()[i];
  }
  const auto w = testing::projection(x.size(), 10);
  const Tensor<double> go(x.shape(), w);
  for (Activation a : {Activation::Linear, Activation::Leaky, Activation::Relu,
                       Activation::Mish}) {
    auto loss = [&] { return testing::dot(activate(x, a).values(), w); };
    const auto gx = activate_backward(x, go, a);
    CHECK(testing::max_grad_error(x.values(), gx.values(), loss) < 1e-7);
  }
}

TEST_CASE("max pool matches a direct window scan") {
  Rng rng(11);
  const int cases[][2] = {{2, 2}, {5, 1}, {9, 1}, {13, 1}, {3, 1}};
  auto x = random_tensor<double>(rng, {2, 3, 8, 8});
  for (const auto& kc : cases) {
    const int k = kc[0], s = kc[1];
    const auto y = max_pool(x, k, s);
    const int pad = s == 1 ? (k - 1) / 2 : 0;
    const int ho = s == 1 ? 8 : (8 - k) / s + 1;
    REQUIRE(y.shape() == Shape{2, 3, ho, ho});
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 3; ++c) {
        for (int oy = 0; oy < ho; ++oy) {
          for (int ox = 0; ox < ho; ++ox) {
            double m = -std::numeric_limits<double>::infinity();
            for (int iy = oy * s - pad; iy < oy * s - pad + k; ++iy) {
              for (int ix = ox * s - pad; ix < ox * s - pad + k; ++ix) {
                if (iy >= 0 && iy < 8 && ix >= 0 && ix < 8) {
                  m = std::max(m, x.at(b, c, iy, ix));
                }
              }
            }
            REQUIRE(y.at(b, c, oy, ox) == m);
          }
        }
      }
    }
  }
}

TEST_CASE("max pool backward matches finite differences") {
  // Distinct values spaced far wider than the difference step, so no
  // perturbation changes a window's argmax.
  Rng rng(12);
  Tensor<double> x({1, 2, 6, 6});
  for (std::size_t i = 0; i < x.size(); ++i) {
    x.values()[i] = 0.01 * static_cast<double>(i);
  }
  for (std::size_t i = x.size() - 1; i > 0; --i) {
    std::swap(x.values()[i], x.values()[rng.below(i + 1)]);
  }
  const auto w = testing::projection(2 * 36, 13);
  for (int k : {3, 5}) {
    auto loss = [&] { return testing::dot(max_pool(x, k, 1).values(), w); };
    const auto gx = max_pool_backward(x, k, 1, Tensor<double>({1, 2, 6, 6}, w));
    CHECK(testing::max_grad_error(x.values(), gx.values(), loss) < 1e-7);
  }
  const auto w2 = testing::projection(2 * 9, 14);
  auto loss2 = [&] { return testing::dot(max_pool(x, 2, 2).values(), w2); };
  const auto g2 = max_pool_backward(x, 2, 2, Tensor<double>({1, 2, 3, 3}, w2));
  CHECK(testing::max_grad_error(x.values(), g2.values(), loss2) < 1e-7);
}

TEST_CASE("upsample and route") {
  Rng rng(15);
  auto x = random_tensor<double>(rng, {1, 2, 3, 3});
  const auto up = upsample2x(x);
  REQUIRE(up.shape() == Shape{1, 2, 6, 6});
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 6; ++y) {
      for (int xx = 0; xx < 6; ++xx) {
        REQUIRE(up.at(0, c, y, xx) == x.at(0, c, y / 2, xx / 2));
      }
    }
  }
  const auto w = testing::projection(up.size(), 16);
  auto loss = [&] { return testing::dot(upsample2x(x).values(), w); };
  const auto gx = upsample2x_backward(Tensor<double>(up.shape(), w));
  CHECK(testing::max_grad_error(x.values(), gx.values(), loss) < 1e-9);

  auto a = random_tensor<double>(rng, {2, 4, 3, 3});
  auto b = random_tensor<double>(rng, {2, 2, 3, 3});
  const auto cat = route<double>({&a, &b});
  REQUIRE(cat.shape() == Shape{2, 6, 3, 3});
  CHECK(cat.at(1, 5, 2, 1) == b.at(1, 1, 2, 1));
  CHECK(cat.at(1, 3, 0, 0) == a.at(1, 3, 0, 0));
  const auto hi = route<double>({&a}, 1);
  REQUIRE(hi.shape() == Shape{2, 2, 3, 3});
  CHECK(hi.at(1, 0, 1, 1) == a.at(1, 2, 1, 1));
  const auto lo = route<double>({&a}, 0);
  CHECK(lo.at(0, 1, 2, 2) == a.at(0, 1, 2, 2));
  CHECK_THROWS_AS(route<double>({&a, &x}), ShapeError);

  const auto parts = route_backward<double>({a.shape(), b.shape()}, std::nullopt, cat);
  CHECK(parts[0] == a);
  CHECK(parts[1] == b);
  const auto split = route_backward<double>({a.shape()}, 1, hi);
  CHECK(split[0].at(1, 2, 1, 1) == a.at(1, 2, 1, 1));
  CHECK(split[0].at(1, 0, 1, 1) == 0.0);
}
