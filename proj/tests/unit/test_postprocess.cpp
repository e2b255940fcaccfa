#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "edgeyolo/postprocess/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace edgeyolo;
using namespace edgeyolo::post;

namespace {

Box random_box(Rng& rng, double extent = 100.0) {
  return {rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(1, extent / 2),
          rng.uniform(1, extent / 2)};
}

netdef::HeadOutput<float> head(int anchors, int classes, int s) {
  netdef::HeadOutput<float> h;
  h.raw = Tensor<float>(Shape{1, anchors * (5 + classes), s, s}, -20.0f);
  return h;
}

}  // namespace

TEST_CASE("decode places boxes per the cell formula") {
  auto h = head(1, 2, 13);
  const int base = 0;
  h.raw.at(0, base + 0, 7, 5) = 0.0f;
  h.raw.at(0, base + 1, 7, 5) = 0.0f;
  h.raw.at(0, base + 2, 7, 5) = 0.0f;
  h.raw.at(0, base + 3, 7, 5) = 0.0f;
  h.raw.at(0, base + 4, 7, 5) = 5.0f;
  h.raw.at(0, base + 6, 7, 5) = 3.0f;
  const auto d = decode(h, {{2.0, 3.0}}, 2, 416, 416, 0.01);
  REQUIRE(d.size() == 1);
  CHECK(d[0].box.cx == doctest::Approx(176.0));
  CHECK(d[0].box.cy == doctest::Approx(240.0));
  CHECK(d[0].box.w == doctest::Approx(2.0));
  CHECK(d[0].box.h == doctest::Approx(3.0));
  CHECK(d[0].class_id == 1);
  CHECK(d[0].score == doctest::Approx(sigmoid(5.0) * sigmoid(3.0)));

  h.raw.at(0, base + 2, 7, 5) = static_cast<float>(std::log(2.0));
  h.raw.at(0, base + 0, 7, 5) = 10.0f;
  const auto d2 = decode(h, {{2.0, 3.0}}, 2, 416, 416, 0.01);
  CHECK(d2[0].box.w == doctest::Approx(4.0));
  CHECK(d2[0].box.cx < 6 * 32.0);
  CHECK(d2[0].box.cx > 5.999 * 32.0);

  CHECK_THROWS_AS(decode(h, {{1, 1}, {2, 2}}, 2, 416, 416), std::invalid_argument);
}

TEST_CASE("decoded centers stay inside the image") {
  Rng rng(2);
  auto h = head(2, 3, 4);
  for (float& v : h.raw.values()) {
    v = static_cast<float>(rng.uniform(-30, 30));
  }
  for (const auto& d : decode(h, {{5, 5}, {9, 3}}, 3, 64, 48, 0.0)) {
    CHECK(d.box.cx > 0.0);
    CHECK(d.box.cx < 64.0);
    CHECK(d.box.cy > 0.0);
    CHECK(d.box.cy < 48.0);
    CHECK(d.score >= 0.0);
    CHECK(d.score <= 1.0);
  }
}

TEST_CASE("iou") {
  const Box a{1, 1, 2, 2}, b{2, 2, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box{10, 10, 2, 2}) == 0.0);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou(Box{0, 0, 0, 0}, Box{0, 0, 0, 0}) == 0.0);
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Box p = random_box(rng), q = random_box(rng);
    CHECK(iou(p, q) == iou(q, p));
    CHECK(iou(p, q) == doctest::Approx(testing::oracle_iou(p, q)).epsilon(1e-12));
    CHECK(iou(p, p) == 1.0);
  }
}

TEST_CASE("ciou loss") {
  CHECK(ciou_loss(Box{5, 5, 2, 2}, Box{5, 5, 4, 4}) == doctest::Approx(0.75).epsilon(1e-12));
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const Box a = random_box(rng);
    CHECK(ciou_loss(a, a) == 0.0);
    Box p = random_box(rng);
    if (i % 10 == 0) {
      p.w = 0.0;
    }
    const double l = ciou_loss(p, random_box(rng));
    CHECK(l >= 0.0);
    CHECK(l < 3.0);
  }
  // Degenerate prediction: arctan(w/0+) = pi/2.
  const double v = 4.0 / (std::numbers::pi * std::numbers::pi) *
                   std::pow(std::atan(1.0) - std::numbers::pi / 2, 2);
  const double l = ciou_loss(Box{0, 0, 2, 0}, Box{0, 0, 2, 2});
  CHECK(l == doctest::Approx(1.0 + v * v / (1.0 + v)));
}

TEST_CASE("ciou gradient from dual numbers matches finite differences") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const Box gt = random_box(rng, 50);
    Box p = random_box(rng, 50);
    if (t % 3 == 0) {
      p.cx = gt.cx + rng.uniform(-3, 3);
      p.cy = gt.cy + rng.uniform(-3, 3);
    }
    using D = Dual<4>;
    BoxT<D> pd{D::variable(p.cx, 0), D::variable(p.cy, 1), D::variable(p.w, 2),
               D::variable(p.h, 3)};
    BoxT<D> gd{gt.cx, gt.cy, gt.w, gt.h};
    const D l = ciou_loss(pd, gd);
    CHECK(l.v == doctest::Approx(ciou_loss(p, gt)).epsilon(1e-12));
    std::vector<double> x{p.cx, p.cy, p.w, p.h};
    auto f = [&] { return ciou_loss(Box{x[0], x[1], x[2], x[3]}, gt); };
    std::vector<double> g(l.d.begin(), l.d.end());
    CHECK(testing::max_grad_error(x, g, f, 1, 1e-4) < 1e-3);
  }
}

TEST_CASE("soft-nms hand cases") {
  SoftNmsConfig cfg;
  const Detection a{{10, 10, 10, 10}, 0, 0.9};
  CHECK(soft_nms({a}, cfg).size() == 1);
  CHECK(soft_nms({a}, cfg)[0].score == 0.9);
  const Detection far{{100, 100, 10, 10}, 0, 0.7};
  const auto two = soft_nms({far, a}, cfg);
  REQUIRE(two.size() == 2);
  CHECK(two[0].score == 0.9);
  CHECK(two[1].score == 0.7);
  // Same center, half the height: IoU exactly 1/2.
  const Detection G{{0, 0, 20, 20}, 0, 0.9};
  const Detection H{{0, 0, 20, 10}, 0, 0.8};
  REQUIRE(iou(G.box, H.box) == 0.5);
  const auto r = soft_nms({G, H}, {0.5, 0.45, 0.001});
  REQUIRE(r.size() == 2);
  CHECK(r[1].score == doctest::Approx(0.8 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(r[1].score == doctest::Approx(0.2943).epsilon(1e-4));
  // Different classes never suppress each other.
  Detection H2 = H;
  H2.class_id = 1;
  CHECK(soft_nms({G, H2}, cfg)[1].score == 0.8);
}

TEST_CASE("soft-nms matches the oracle and its invariants") {
  Rng rng(6);
  for (int t = 0; t < 300; ++t) {
    const int n = rng.range(0, 10);
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) {
      dets.push_back({random_box(rng, 40), rng.range(0, 1), rng.uniform(0, 1)});
    }
    const SoftNmsConfig cfg{rng.uniform(0.1, 1.0), rng.uniform(0.0, 0.7), 0.001};
    const auto got = soft_nms(dets, cfg);
    const auto want = testing::oracle_soft_nms(dets, cfg.sigma, cfg.t_nms, cfg.score_floor);
    REQUIRE(got.size() == want.size());
    CHECK(got.size() <= dets.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].box == want[i].box);
      CHECK(std::abs(got[i].score - want[i].score) <= 1e-9);
      if (i > 0) {
        CHECK(got[i].score <= got[i - 1].score);
      }
    }
    if (!dets.empty()) {
      double top = 0;
      for (const auto& d : dets) top = std::max(top, d.score);
      if (top >= cfg.score_floor) {
        CHECK(got[0].score == top);
      }
    }
    for (const auto& d : got) {
      bool found = false;
      for (const auto& o : dets) {
        found = found || (o.box == d.box && d.score <= o.score);
      }
      CHECK(found);
    }
  }
}

TEST_CASE("soft-nms converges to hard nms and is then idempotent") {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const int n = rng.range(1, 10);
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) {
      dets.push_back({random_box(rng, 40), rng.range(0, 2), rng.uniform(0.01, 1)});
    }
    const double tn = rng.uniform(0.1, 0.7);
    const auto soft = soft_nms(dets, {1e-6, tn, 0.001});
    const auto hard = hard_nms(dets, tn);
    const auto oracle = testing::oracle_hard_nms(dets, tn);
    REQUIRE(soft.size() == hard.size());
    REQUIRE(hard.size() == oracle.size());
    for (std::size_t i = 0; i < soft.size(); ++i) {
      CHECK(soft[i].box == hard[i].box);
      CHECK(hard[i].box == oracle[i].box);
    }
    const auto again = soft_nms(soft, {1e-6, tn, 0.001});
    REQUIRE(again.size() == soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) {
      CHECK(again[i].box == soft[i].box);
      CHECK(again[i].score == soft[i].score);
    }
  }
}

TEST_CASE("evaluate: perfect predictions and counting identities") {
  Rng rng(8);
  std::vector<std::vector<GroundTruth>> gts(3);
  std::vector<std::vector<Detection>> preds(3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 4; ++k) {
      const GroundTruth g{random_box(rng), rng.range(0, 2)};
      gts[i].push_back(g);
      preds[i].push_back({g.box, g.class_id, rng.uniform(0.1, 1)});
    }
  }
  for (double th : {0.1, 0.5, 0.9}) {
    const auto r = evaluate(preds, gts, 3, th);
    for (const auto& c : r.classes) {
      if (c.num_gt > 0) {
        CHECK(c.precision == 1.0);
        CHECK(c.recall == 1.0);
        CHECK(c.ap == doctest::Approx(1.0));
      }
    }
  }
  CHECK_THROWS_AS(evaluate({{Detection{{}, 5, 0.5}}}, {{}}, 3), std::out_of_range);
}

TEST_CASE("evaluate: recall one half") {
  std::vector<std::vector<GroundTruth>> gts(1);
  std::vector<std::vector<Detection>> preds(1);
  for (int i = 0; i < 100; ++i) {
    const Box b{20.0 * i, 0, 10, 10};
    gts[0].push_back({b, 0});
    if (i % 2 == 0) {
      preds[0].push_back({b, 0, 0.9});
    }
  }
  const auto r = evaluate(preds, gts, 1);
  CHECK(r.tp == 50);
  CHECK(r.fn == 50);
  CHECK(r.classes[0].recall == 0.5);
  CHECK(r.classes[0].precision == 1.0);
}

TEST_CASE("evaluate: three predictions, two ground truths") {
  const std::vector<std::vector<GroundTruth>> gts{{{{10, 10, 10, 10}, 0}, {{50, 50, 10, 10}, 0}}};
  const std::vector<std::vector<Detection>> preds{{{{11, 10, 10, 10}, 0, 0.9},
                                                   {{90, 90, 10, 10}, 0, 0.8},
                                                   {{50, 51, 10, 10}, 0, 0.7}}};
  const auto r = evaluate(preds, gts, 1);
  CHECK(r.classes[0].tp == 2);
  CHECK(r.classes[0].fp == 1);
  CHECK(r.classes[0].ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  const auto o = testing::oracle_evaluate(preds, gts, 1, 0.5);
  CHECK(r.classes[0].ap == doctest::Approx(o[0].ap).epsilon(1e-12));
}

TEST_CASE("evaluate agrees with the oracle on random fixtures") {
  Rng rng(9);
  for (int t = 0; t < 300; ++t) {
    const int imgs = rng.range(1, 3), classes = rng.range(1, 3);
    std::vector<std::vector<GroundTruth>> gts(imgs);
    std::vector<std::vector<Detection>> preds(imgs);
    for (int i = 0; i < imgs; ++i) {
      for (int k = rng.range(0, 4); k > 0; --k) {
        gts[i].push_back({random_box(rng, 60), rng.range(0, classes - 1)});
      }
      for (int k = rng.range(0, 6); k > 0; --k) {
        Box b = random_box(rng, 60);
        if (!gts[i].empty() && rng.bernoulli(0.5)) {
          b = gts[i][rng.below(gts[i].size())].box;
          b.cx += rng.uniform(-3, 3);
        }
        preds[i].push_back({b, rng.range(0, classes - 1), std::round(rng.uniform(0, 1) * 10) / 10});
      }
    }
    const auto r = evaluate(preds, gts, classes, 0.5);
    const auto o = testing::oracle_evaluate(preds, gts, classes, 0.5);
    for (int c = 0; c < classes; ++c) {
      const auto& s = r.classes[c];
      CHECK(s.tp == o[c].tp);
      CHECK(s.fp == o[c].fp);
      CHECK(s.tp + s.fn == o[c].num_gt);
      if (s.tp + s.fp > 0) {
        CHECK(s.precision == static_cast<double>(s.tp) / (s.tp + s.fp));
      }
      if (s.num_gt > 0) {
        CHECK(s.recall == static_cast<double>(s.tp) / (s.tp + s.fn));
      }
      CHECK(s.ap == doctest::Approx(o[c].ap).epsilon(1e-12));
    }
  }
}

TEST_CASE("json lines output") {
  std::ostringstream out;
  write_jsonl(out, "a.ppm", {{{1, 2, 3, 4}, 7, 0.5}, {{5, 6, 7, 8}, 1, 0.25}});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["image"] == "a.ppm");
  CHECK(j["class"] == 7);
  CHECK(j["score"] == 0.5);
  CHECK(j["h"] == 4.0);
  std::getline(in, line);
  CHECK(nlohmann::json::parse(line)["cx"] == 5.0);
}
