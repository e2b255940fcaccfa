#include "edgeyolo/training/shapes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace edgeyolo::training {

namespace {

constexpr std::array<std::array<float, 3>, 4> kPalette{{
    {0.90f, 0.15f, 0.15f},
    {0.15f, 0.85f, 0.20f},
    {0.20f, 0.30f, 0.95f},
    {0.95f, 0.85f, 0.10f},
}};

}  // namespace

Sample make_sample(Rng& rng, const ShapesConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.num_classes > static_cast<int>(kPalette.size())) {
    throw std::invalid_argument("shapes support 1 to 4 classes");
  }
  const int n = cfg.size;
  Sample s{Tensor<float>(Shape{1, 3, n, n}), {}};
  for (int c = 0; c < 3; ++c) {
    float* p = s.image.plane(0, c);
    for (int i = 0; i < n * n; ++i) {
      p[i] = static_cast<float>(rng.uniform(0.25, 0.65));
    }
  }
  const int count = rng.range(cfg.min_objects, cfg.max_objects);
  for (int tries = 0; static_cast<int>(s.gts.size()) < count && tries < 100; ++tries) {
    post::GroundTruth g;
    g.class_id = rng.range(0, cfg.num_classes - 1);
    g.box.w = std::round(rng.uniform(cfg.min_extent, cfg.max_extent));
    g.box.h = std::round(rng.uniform(cfg.min_extent, cfg.max_extent));
    g.box.cx = g.box.w / 2 + std::round(rng.uniform(0, n - g.box.w));
    g.box.cy = g.box.h / 2 + std::round(rng.uniform(0, n - g.box.h));
    bool clear = true;
    for (const auto& o : s.gts) {
      clear = clear && post::iou(o.box, g.box) <= cfg.max_overlap;
    }
    if (!clear) {
      continue;
    }
    const auto& color = kPalette[g.class_id];
    const bool ellipse = g.class_id % 2 == 1;
    const double rx = g.box.w / 2, ry = g.box.h / 2;
    for (int y = static_cast<int>(g.box.y1()); y < static_cast<int>(g.box.y2()); ++y) {
      for (int x = static_cast<int>(g.box.x1()); x < static_cast<int>(g.box.x2()); ++x) {
        if (ellipse) {
          const double dx = (x + 0.5 - g.box.cx) / rx;
          const double dy = (y + 0.5 - g.box.cy) / ry;
          if (dx * dx + dy * dy > 1.0) continue;
        }
        for (int c = 0; c < 3; ++c) {
          const double v = color[c] + rng.uniform(-0.05, 0.05);
          s.image.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    s.gts.push_back(g);
  }
  return s;
}

std::vector<Sample> make_samples(Rng& rng, const ShapesConfig& cfg, int count) {
  std::vector<Sample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back(make_sample(rng, cfg));
  }
  return out;
}

Tensor<float> stack_images(const std::vector<Sample>& samples, std::size_t first,
                           std::size_t n) {
  if (n == 0 || first + n > samples.size()) {
    throw std::out_of_range("stack_images range");
  }
  Shape s = samples[first].image.shape();
  const std::size_t per = s.size();
  s.n = static_cast<int>(n);
  Tensor<float> out(s);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& img = samples[first + i].image;
    if (img.size() != per) {
      throw ShapeError("stack_images: mixed image sizes");
    }
    std::memcpy(out.data() + i * per, img.data(), per * sizeof(float));
  }
  return out;
}

}  // namespace edgeyolo::training
