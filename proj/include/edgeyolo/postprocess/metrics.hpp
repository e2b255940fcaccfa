#pragma once

#include <vector>

#include "edgeyolo/postprocess/detect.hpp"

namespace edgeyolo::post {

struct GroundTruth {
  Box box;
  int class_id = 0;
};

struct ClassStats {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int num_gt = 0;
  /// TP / (TP + FP), 0 when there are no detections.
  double precision = 0.0;
  /// TP / (TP + FN), 0 when there are no ground truths.
  double recall = 0.0;
  /// All-points interpolated area under the precision-recall curve.
  double ap = 0.0;
};

struct EvalReport {
  std::vector<ClassStats> classes;
  /// Mean AP over classes that have at least one ground truth.
  double map = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

/// Per class, detections of all images are ranked by descending score (ties
/// by image, then list position). Each is matched to the unmatched same-class
/// ground truth of its image with the highest IoU, provided IoU >= iou_thresh;
/// otherwise it is a false positive. Every detection counts.
EvalReport evaluate(const std::vector<std::vector<Detection>>& preds,
                    const std::vector<std::vector<GroundTruth>>& gts, int num_classes,
                    double iou_thresh = 0.5);

/// Area under the monotone precision envelope of a ranked TP/FP sequence.
double average_precision(const std::vector<bool>& ranked_is_tp, int num_gt);

}  // namespace edgeyolo::post
