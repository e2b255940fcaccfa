#pragma once

#include <optional>
#include <vector>

#include "edgeyolo/image.hpp"
#include "edgeyolo/netdef/model.hpp"
#include "edgeyolo/postprocess/detect.hpp"

namespace edgeyolo {

/// Letterbox, forward, decode (with the NMS score floor), Soft-NMS, then
/// boxes mapped back to source-image pixels. The graph input must be square.
std::vector<post::Detection> detect_image(const netdef::Model<float>& model, const Image& img,
                                          const post::SoftNmsConfig& nms = {});

struct BenchReport {
  int runs = 0;
  std::vector<double> samples_s;
  double mean_s = 0.0;
  double median_s = 0.0;
  /// Absent for a single run.
  std::optional<double> stddev_s;
  std::optional<double> p95_s;
  /// 1 / median.
  double fps = 0.0;
};

/// Times `runs` forward passes on a seeded random input after `warmup`
/// untimed ones.
BenchReport bench_forward(const netdef::Model<float>& model, int warmup, int runs,
                          std::uint64_t seed = 1);

}  // namespace edgeyolo
