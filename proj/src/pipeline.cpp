#include "edgeyolo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "edgeyolo/rng.hpp"

namespace edgeyolo {

std::vector<post::Detection> detect_image(const netdef::Model<float>& model, const Image& img,
                                          const post::SoftNmsConfig& nms) {
  const netdef::Graph& g = model.graph();
  if (g.in_w != g.in_h) {
    throw std::invalid_argument("letterboxing needs a square network input");
  }
  Letterbox geom;
  const Tensor<float> input = letterbox(img, g.in_w, &geom);
  auto dets = post::soft_nms(post::decode_all(model.forward(input), g, nms.score_floor), nms);
  for (auto& d : dets) {
    d.box = geom.to_source(d.box);
  }
  return dets;
}

BenchReport bench_forward(const netdef::Model<float>& model, int warmup, int runs,
                          std::uint64_t seed) {
  if (warmup < 1 || runs < 1) {
    throw std::invalid_argument("bench needs at least one warmup and one timed run");
  }
  Rng rng(seed);
  Tensor<float> input(model.graph().input_shape());
  for (float& v : input.values()) {
    v = static_cast<float>(rng.uniform());
  }
  for (int i = 0; i < warmup; ++i) {
    model.forward(input);
  }
  BenchReport r;
  r.runs = runs;
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.forward(input);
    r.samples_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::vector<double> sorted = r.samples_s;
  std::sort(sorted.begin(), sorted.end());
  r.mean_s = std::accumulate(sorted.begin(), sorted.end(), 0.0) / runs;
  r.median_s = runs % 2 ? sorted[runs / 2] : (sorted[runs / 2 - 1] + sorted[runs / 2]) / 2;
  if (runs > 1) {
    double ss = 0;
    for (double s : sorted) ss += (s - r.mean_s) * (s - r.mean_s);
    r.stddev_s = std::sqrt(ss / (runs - 1));
    // Nearest-rank percentile.
    r.p95_s = sorted[static_cast<std::size_t>(std::ceil(0.95 * runs)) - 1];
  }
  r.fps = 1.0 / r.median_s;
  return r;
}

}  // namespace edgeyolo
