#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "edgeyolo/anchor_set.hpp"

namespace edgeyolo::anchors {

enum class Metric {
  /// Squared Euclidean distance between normalized (w, h) pairs.
  Euclidean,
  /// 1 - IoU of the two extents placed at a common corner.
  Iou,
};

struct KMeansOptions {
  int k = 18;
  std::uint64_t seed = 0;
  int max_iter = 300;
  Metric metric = Metric::Euclidean;
  /// Extents are divided by these before clustering.
  double norm_w = 416.0;
  double norm_h = 416.0;
};

struct KMeansResult {
  /// Centroids in pixels, sorted by area ascending.
  std::vector<Anchor> centroids;
  /// Cluster index (into `centroids`) of every input point.
  std::vector<int> assignment;
  /// Distortion (normalized units, chosen metric) of the initial centroids,
  /// then after every iteration.
  std::vector<double> history;
  int iterations = 0;
  bool converged = false;

  /// Groups the centroids over `scales` output grids.
  AnchorSet anchor_set(int scales = 3) const { return AnchorSet(centroids, scales); }
};

/// Lloyd iterations from k distinct seeded samples until no centroid moves
/// or max_iter. A centroid that loses all its points is moved onto the point
/// farthest from its own centroid (lowest index on ties).
KMeansResult kmeans_anchors(const std::vector<Anchor>& data, const KMeansOptions& opts);

double point_distance(const Anchor& a, const Anchor& b, Metric metric);

/// Sum over points of the distance to the nearest centroid, after dividing
/// both by (norm_w, norm_h).
double distortion(const std::vector<Anchor>& data, const std::vector<Anchor>& centroids,
                  Metric metric = Metric::Euclidean, double norm_w = 1.0,
                  double norm_h = 1.0);

/// Box extents from label CSV lines "image,class,cx,cy,w,h" (pixels). Lines
/// starting with '#' and a header line beginning with "image" are skipped.
std::vector<Anchor> parse_label_extents(std::string_view csv);
std::vector<Anchor> load_label_extents(const std::filesystem::path& path);

}  // namespace edgeyolo::anchors
