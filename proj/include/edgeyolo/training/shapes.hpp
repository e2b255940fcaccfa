#pragma once

#include <vector>

#include "edgeyolo/postprocess/metrics.hpp"
#include "edgeyolo/rng.hpp"
#include "edgeyolo/tensor.hpp"

namespace edgeyolo::training {

/// Synthetic detection data: filled rectangles and ellipses on a noise
/// background. Class k has its own color and shape (even k rectangles, odd
/// k ellipses).
struct ShapesConfig {
  int size = 64;
  int num_classes = 3;
  int min_objects = 1;
  int max_objects = 3;
  double min_extent = 12.0;
  double max_extent = 36.0;
  /// New boxes overlapping an earlier one by more than this IoU are redrawn.
  double max_overlap = 0.1;
};

struct Sample {
  /// (1, 3, size, size), values in [0, 1].
  Tensor<float> image;
  std::vector<post::GroundTruth> gts;
};

Sample make_sample(Rng& rng, const ShapesConfig& cfg);
std::vector<Sample> make_samples(Rng& rng, const ShapesConfig& cfg, int count);

/// Stacks samples [first, first + n) into one (n, 3, H, W) tensor.
Tensor<float> stack_images(const std::vector<Sample>& samples, std::size_t first, std::size_t n);

}  // namespace edgeyolo::training
