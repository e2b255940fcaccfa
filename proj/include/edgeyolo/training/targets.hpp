#pragma once

#include <vector>

#include "edgeyolo/anchor_set.hpp"
#include "edgeyolo/netdef/graph.hpp"
#include "edgeyolo/postprocess/metrics.hpp"

namespace edgeyolo::training {

using post::GroundTruth;

struct GridSize {
  int w = 0;
  int h = 0;
};

/// A ground truth bound to the (scale, cell, anchor) slot that predicts it.
struct Positive {
  int scale = 0;
  int cell_x = 0;
  int cell_y = 0;
  int anchor = 0;
  GroundTruth gt;
};

/// Slot table of one output scale, laid out [anchor][y][x].
struct ScaleTargets {
  GridSize grid;
  std::vector<Anchor> anchors;
  /// Index into TargetAssignment::positives, or -1 for a negative slot.
  std::vector<int> slot;

  int& at(int a, int y, int x) { return slot[(static_cast<std::size_t>(a) * grid.h + y) * grid.w + x]; }
  int at(int a, int y, int x) const {
    return slot[(static_cast<std::size_t>(a) * grid.h + y) * grid.w + x];
  }
};

/// Targets of one image.
struct TargetAssignment {
  int img_w = 0;
  int img_h = 0;
  int num_classes = 0;
  std::vector<ScaleTargets> scales;
  std::vector<Positive> positives;
};

/// Assigns every ground truth to one slot: among all anchors of all scales
/// the one with the highest IoU against the box when both sit at the origin
/// (lowest flat anchor index on ties), in the grid cell holding the box
/// center. If that slot is already taken, the next-best anchor is tried.
/// Ground truths are processed in a canonical order (best anchor IoU
/// descending, then cx, cy, w, h, class), so the result does not depend on
/// the order of `gts`.
/// Throws std::invalid_argument for a non-positive extent, a center outside
/// the image, a bad class id, or when no free slot is left.
TargetAssignment assign_targets(const std::vector<GroundTruth>& gts, const AnchorSet& anchors,
                                const std::vector<GridSize>& grids, int img_w, int img_h,
                                int num_classes);

/// Grids, anchors, and input size taken from a graph's heads.
TargetAssignment assign_targets(const std::vector<GroundTruth>& gts, const netdef::Graph& g);

/// IoU of two extents placed at a common corner.
double shape_iou(double w0, double h0, double w1, double h1);

}  // namespace edgeyolo::training
