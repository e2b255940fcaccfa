#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "edgeyolo/netdef/graph.hpp"
#include "edgeyolo/netdef/model.hpp"
#include "edgeyolo/netdef/weights.hpp"
#include "random_graph.hpp"
#include "support.hpp"

using namespace edgeyolo;
using namespace edgeyolo::netdef;

namespace {

Graph small_preset(int input = 64, int divisor = 8, int classes = 3, int a = 2) {
  std::vector<Anchor> an;
  for (int i = 0; i < 3 * a; ++i) {
    an.push_back({4.0 + 3 * i, 5.0 + 2 * i});
  }
  return build_edge_yolo(classes, AnchorSet(an, 3), a, {input, divisor});
}

template <class T>
void randomize(Model<T>& m, std::uint64_t seed) {
  m.init_random(seed);
  Rng rng(seed + 1);
  for (auto& p : m.params()) {
    for (T& b : p.conv.bias) {
      b = static_cast<T>(rng.uniform(-0.1, 0.1));
    }
    if (p.bn) {
      for (std::size_t c = 0; c < p.bn->channels(); ++c) {
        p.bn->gamma[c] = static_cast<T>(rng.uniform(0.5, 1.5));
        p.bn->beta[c] = static_cast<T>(rng.uniform(-0.2, 0.2));
        p.bn->running_mean[c] = static_cast<T>(rng.uniform(-0.2, 0.2));
        p.bn->running_var[c] = static_cast<T>(rng.uniform(0.5, 2.0));
      }
    }
  }
}

constexpr double kChecksumSum = -10.69976753;
constexpr double kChecksumAbs = 63.92009797;

}  // namespace

TEST_CASE("parse a small config") {
  const Graph g = parse_config(
      "# tiny\n"
      "net 16 16 3 classes 2 anchors 1\n"
      "conv 3x3/2 8\n"
      "max 2x2/2     # pool\n"
      "conv 1x1/1 4 relu\n"
      "route 2 1\n"
      "route 3 split 1\n"
      "upsample\n"
      "conv 1x1/1 7 linear\n"
      "head 0\n");
  REQUIRE(g.layers.size() == 8);
  CHECK(g.in_w == 16);
  CHECK(g.num_classes == 2);
  CHECK(g.anchors_per_scale == 1);
  CHECK(g.layers[0].out == Shape{1, 8, 8, 8});
  CHECK(g.layers[1].out == Shape{1, 8, 4, 4});
  CHECK(g.layers[2].activation == nn::Activation::Relu);
  CHECK(g.layers[2].batch_norm);
  CHECK(g.layers[3].out == Shape{1, 12, 4, 4});
  CHECK(g.layers[4].out == Shape{1, 6, 4, 4});
  CHECK(g.layers[5].out == Shape{1, 6, 8, 8});
  CHECK(!g.layers[6].batch_norm);
  CHECK(g.layers[7].kind == LayerKind::Head);
  CHECK(g.layers[7].line == 10);
  CHECK(g.head_layers() == std::vector<int>{7});
  CHECK(g.inputs_of(0) == std::vector<int>{-1});
  CHECK(g.inputs_of(3) == std::vector<int>{2, 1});
}

TEST_CASE("empty body is a valid zero-layer graph") {
  const Graph g = parse_config("net 8 8 3\n");
  CHECK(g.layers.empty());
  Model<float> m(g);
  m.init_zero();
  CHECK(m.forward(Tensor<float>(g.input_shape())).empty());
}

TEST_CASE("config errors carry line and layer") {
  auto expect_error = [](const char* text, int line, int layer) {
    try {
      parse_config(text);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.line() == line);
      CHECK(e.layer() == layer);
    }
  };
  expect_error("net 8 8 3\nconv 3x3/1 4\nconv 3x3/1 4\nconv 1x1/1 4\nroute 99\n", 5, 3);
  expect_error("net 8 8 3\nconv 3x3/1 4\nroute 1\n", 3, 1);
  expect_error("net 8 8 3\n\nconv 3x3/1 4\nfoo 3\n", 4, 1);
  expect_error("conv 3x3/1 4\n", 1, -1);
  expect_error("net 8 8 3\nconv 2x2/1 4\n", 2, 0);
  expect_error("net 8 8 3 classes 2 anchors 1\nconv 1x1/1 8 linear\nhead 0\n", 3, 1);
  expect_error("net 8 8 3\nconv 1x1/1 3\nroute 0 split 1\n", 3, 1);
  expect_error("net 4 4 3\nmax 2x2/2\nmax 2x2/2\nmax 2x2/2\n", 4, 2);
}

TEST_CASE("edge yolo preset matches the published backbone and neck") {
  const Graph g = build_edge_yolo(80, default_anchors(), 6);
  REQUIRE(g.layers.size() >= 35);
  const auto& L = g.layers;
  CHECK(L[0].kind == LayerKind::Conv);
  CHECK(L[0].size == 3);
  CHECK(L[0].stride == 2);
  CHECK(L[0].filters == 32);
  CHECK(L[0].out == Shape{1, 32, 208, 208});
  CHECK(L[2].stride == 1);
  CHECK(L[2].out == Shape{1, 64, 104, 104});
  CHECK(L[3].refs == std::vector<int>{2});
  CHECK(L[3].out == Shape{1, 32, 104, 104});
  CHECK(L[6].refs == std::vector<int>{5, 4});
  CHECK(L[8].refs == std::vector<int>{2, 7});
  CHECK(L[16].refs == std::vector<int>{15, 13, 11, 10});
  CHECK(L[16].out == Shape{1, 512, 52, 52});
  CHECK(L[19].out == Shape{1, 64, 52, 52});
  CHECK(L[24].out == Shape{1, 256, 52, 52});
  CHECK(L[25].out == Shape{1, 256, 26, 26});
  CHECK(L[32].out == Shape{1, 256, 26, 26});
  CHECK(L[33].out == Shape{1, 512, 26, 26});
  CHECK(L[34].out == Shape{1, 512, 13, 13});

  const auto heads = g.head_layers();
  REQUIRE(heads.size() == 3);
  const int grids[] = {13, 26, 52};
  for (int s = 0; s < 3; ++s) {
    const LayerSpec& h = L[heads[s]];
    CHECK(h.head_scale == s);
    CHECK(h.out == Shape{1, 510, grids[s], grids[s]});
    const LayerSpec& last = L[heads[s] - 1];
    CHECK(last.kind == LayerKind::Conv);
    CHECK(last.size == 1);
    CHECK(!last.batch_norm);
    CHECK(last.activation == nn::Activation::Linear);
    const LayerSpec& prev = L[heads[s] - 2];
    CHECK(prev.size == 3);
    CHECK(prev.filters == 2 * g.input_shape_of(prev.index).c);
  }
  for (const LayerSpec& l : L) {
    for (int r : l.refs) {
      CHECK(r < l.index);
    }
    if (l.kind == LayerKind::Conv && l.batch_norm) {
      CHECK(l.activation != nn::Activation::Linear);
    }
  }
}

TEST_CASE("preset anchor validation") {
  CHECK_THROWS_AS(build_edge_yolo(80, AnchorSet(std::vector<Anchor>(4, {1, 1}), 1), 4),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_edge_yolo(80, default_anchors(), 5), std::invalid_argument);
  const Graph g = build_edge_yolo(20, default_anchors(), 6);
  CHECK(g.layers[g.head_layers()[0]].out.c == 6 * 25);
}

TEST_CASE("canonical text round trips and drives the signature") {
  const Graph g = build_edge_yolo(80, default_anchors(), 6);
  const std::string text = canonical_text(g);
  const Graph again = parse_config(text);
  CHECK(canonical_text(again) == text);
  CHECK(signature(again) == signature(g));
  CHECK(signature(small_preset()) != signature(g));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("shipped preset config equals the built preset") {
  const Graph shipped = load_config(testing::data_dir() / "configs/edge-yolo-416.net");
  const Graph built = build_edge_yolo(80, default_anchors(), 6);
  CHECK(canonical_text(shipped) == canonical_text(built));
  for (std::size_t i = 0; i < built.layers.size(); ++i) {
    CHECK(shipped.layers[i].out == built.layers[i].out);
  }
}

TEST_CASE("forward on the full preset") {
  const Graph g = build_edge_yolo(80, default_anchors(), 6);
  Model<float> m(g);
  CHECK_THROWS_AS(m.forward(Tensor<float>(g.input_shape())), std::logic_error);
  m.init_zero();
  const auto heads = m.forward(Tensor<float>(g.input_shape()));
  REQUIRE(heads.size() == 3);
  const int grids[] = {13, 26, 52};
  for (int s = 0; s < 3; ++s) {
    CHECK(heads[s].scale_index == s);
    CHECK(heads[s].raw.shape() == Shape{1, 510, grids[s], grids[s]});
    for (float v : heads[s].raw.values()) {
      REQUIRE(v == 0.0f);
    }
  }
  CHECK_THROWS_AS(m.forward(Tensor<float>(Shape{1, 3, 320, 320})), ShapeError);
}

TEST_CASE("intermediate shapes equal inferred shapes") {
  const Graph g = small_preset(96, 8);
  Model<float> m(g);
  randomize(m, 3);
  Rng rng(4);
  ForwardCache<float> cache;
  m.forward_train(testing::random_tensor<float>(rng, g.input_shape(2)), cache,
                  BnMode::Running);
  for (const LayerSpec& l : g.layers) {
    Shape want = l.out;
    want.n = 2;
    CHECK(cache.outputs[l.index].shape() == want);
  }
}

TEST_CASE("forward is deterministic and batch-equivariant") {
  const Graph g = small_preset();
  Model<float> m(g);
  randomize(m, 5);
  Rng rng(6);
  const auto x0 = testing::random_tensor<float>(rng, g.input_shape());
  const auto x1 = testing::random_tensor<float>(rng, g.input_shape());
  Tensor<float> both(g.input_shape(2));
  std::copy(x0.values().begin(), x0.values().end(), both.values().begin());
  std::copy(x1.values().begin(), x1.values().end(),
            both.values().begin() + static_cast<long>(x0.size()));
  const auto hb = m.forward(both);
  const auto h0 = m.forward(x0);
  const auto h1 = m.forward(x1);
  CHECK(m.forward(x0)[0].raw == h0[0].raw);
  for (std::size_t s = 0; s < hb.size(); ++s) {
    const std::size_t per = h0[s].raw.size();
    for (std::size_t i = 0; i < per; ++i) {
      REQUIRE(testing::rel_err(hb[s].raw.values()[i], h0[s].raw.values()[i]) < 1e-6);
      REQUIRE(testing::rel_err(hb[s].raw.values()[per + i], h1[s].raw.values()[i]) <
              1e-6);
    }
  }
}

TEST_CASE("forward regression checksum") {
  const Graph g = small_preset();
  Model<float> m(g);
  randomize(m, 42);
  Rng rng(43);
  const auto heads = m.forward(testing::random_tensor<float>(rng, g.input_shape()));
  double sum = 0, abs_sum = 0;
  for (const auto& h : heads) {
    for (float v : h.raw.values()) {
      sum += v;
      abs_sum += std::abs(v);
    }
  }
  // Recorded from the scalar reference path.
  CHECK(sum == doctest::Approx(kChecksumSum).epsilon(1e-4));
  CHECK(abs_sum == doctest::Approx(kChecksumAbs).epsilon(1e-4));
}

TEST_CASE("model backward matches finite differences") {
  Rng rng(8);
  for (int trial = 0; trial < 6; ++trial) {
    Graph g = parse_config(testing::random_config(rng));
    Model<double> m(g);
    randomize(m, 100 + trial);
    const auto x = testing::random_tensor<double>(rng, g.input_shape(2));
    for (BnMode mode : {BnMode::Batch, BnMode::Running}) {
      ForwardCache<double> cache;
      const auto heads = m.forward_train(x, cache, mode);
      std::vector<std::vector<double>> w;
      std::vector<Tensor<double>> grads;
      for (std::size_t k = 0; k < heads.size(); ++k) {
        w.push_back(testing::projection(heads[k].raw.size(), 50 + k));
        grads.emplace_back(heads[k].raw.shape(), w.back());
      }
      auto loss = [&] {
        ForwardCache<double> c;
        const auto hs = m.forward_train(x, c, mode);
        double s = 0;
        for (std::size_t k = 0; k < hs.size(); ++k) {
          s += testing::dot(hs[k].raw.values(), w[k]);
        }
        return s;
      };
      const auto pg = m.backward(cache, grads);
      for (const LayerSpec& l : g.layers) {
        if (!l.has_params()) {
          continue;
        }
        auto& p = m.params()[l.index];
        CHECK(testing::max_grad_error(p.conv.weights.values(), pg[l.index].weights,
                                      loss) < 1e-5);
        CHECK(testing::max_grad_error(p.conv.bias, pg[l.index].bias, loss) < 1e-5);
        if (p.bn) {
          CHECK(testing::max_grad_error(p.bn->gamma, pg[l.index].gamma, loss) < 1e-5);
          CHECK(testing::max_grad_error(p.bn->beta, pg[l.index].beta, loss) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("sgd step moves parameters against the gradient") {
  const Graph g = parse_config("net 4 4 1 classes 1 anchors 1\nconv 1x1/1 6 linear\nhead 0\n");
  Model<float> m(g);
  m.init_zero();
  std::vector<LayerGrads<float>> grads(1);
  grads[0].weights.assign(6, 2.0f);
  grads[0].bias.assign(6, -1.0f);
  m.apply_sgd(grads, 0.5f);
  CHECK(m.params()[0].conv.weights.values() == std::vector<float>(6, -1.0f));
  CHECK(m.params()[0].conv.bias == std::vector<float>(6, 0.5f));
}

TEST_CASE("weights: zero-layer graph is header only") {
  Model<float> m(parse_config("net 8 8 3\n"));
  m.init_zero();
  const auto bytes = serialize_weights(m);
  CHECK(bytes.size() == kWeightsHeaderBytes);
  CHECK(std::memcmp(bytes.data(), "EYWT", 4) == 0);
  CHECK(weights_file_size(m.graph()) == 20);
}

TEST_CASE("weights round trip bitwise over random graphs") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Graph g = parse_config(testing::random_config(rng));
    Model<float> a(g);
    randomize(a, 1000 + trial);
    std::stringstream ss;
    save_weights(a, ss);
    CHECK(ss.str().size() == weights_file_size(g));
    Model<float> b(g);
    load_weights(b, ss);
    CHECK(b.weighted());
    CHECK(serialize_weights(b) == serialize_weights(a));
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
      CHECK(a.params()[i].conv.weights == b.params()[i].conv.weights);
      CHECK(a.params()[i].conv.bias == b.params()[i].conv.bias);
    }
  }
}

TEST_CASE("weights errors are distinct and leave the model untouched") {
  const Graph g = small_preset();
  Model<float> src(g);
  randomize(src, 9);
  const auto good = serialize_weights(src);
  Model<float> dst(g);
  dst.init_zero();
  const auto before = serialize_weights(dst);

  auto code_of = [&](std::vector<std::uint8_t> bytes) {
    try {
      deserialize_weights(dst, bytes);
    } catch (const WeightsError& e) {
      return e.code();
    }
    return WeightsError::Code::Io;
  };
  auto bad = good;
  bad[0] = 'X';
  CHECK(code_of(bad) == WeightsError::Code::BadMagic);
  bad = good;
  bad[4] = 9;
  CHECK(code_of(bad) == WeightsError::Code::VersionMismatch);
  bad = good;
  bad[12] ^= 1;
  CHECK(code_of(bad) == WeightsError::Code::SignatureMismatch);
  bad = good;
  bad.resize(good.size() - 3);
  CHECK(code_of(bad) == WeightsError::Code::Truncated);
  CHECK(code_of({'E', 'Y'}) == WeightsError::Code::BadMagic);
  CHECK(serialize_weights(dst) == before);

  // Truncated mid-blob names the layer.
  bad = good;
  bad.resize(kWeightsHeaderBytes + 100);
  try {
    deserialize_weights(dst, bad);
    FAIL("expected truncation");
  } catch (const WeightsError& e) {
    CHECK(e.code() == WeightsError::Code::Truncated);
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  CHECK(serialize_weights(dst) == before);
  Model<float> other(small_preset(64, 8, 4));
  other.init_zero();
  CHECK_THROWS_AS(deserialize_weights(other, good), WeightsError);
}
