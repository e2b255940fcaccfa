#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "edgeyolo/netdef/model.hpp"
#include "edgeyolo/postprocess/detect.hpp"
#include "edgeyolo/training/loss.hpp"
#include "edgeyolo/training/sgd.hpp"
#include "edgeyolo/training/shapes.hpp"

namespace edgeyolo::training {

struct ToyConfig {
  std::uint64_t seed = 1;
  int steps = 2500;
  int batch = 16;
  double eta = 0.03;
  ShapesConfig shapes;
  int anchors_per_scale = 2;
  int width_divisor = 4;
  /// Boxes drawn to fit the anchors with k-means.
  int anchor_samples = 512;
  int eval_images = 200;
  /// Held-out AP is computed every eval_every steps and after the last one.
  int eval_every = 250;
  LossConfig loss;
  /// A step loss above this aborts training.
  double divergence = 1e4;
};

struct HistoryRow {
  int step = 0;
  LossReport loss;
  /// Held-out mAP@0.5, present on evaluation steps.
  std::optional<double> map;
};

struct ToyResult {
  netdef::Model<float> model;
  std::vector<HistoryRow> history;
  /// Loss of the first step and mean loss of the last (up to) 10 steps.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// Held-out mAP@0.5 after training.
  double final_map = 0.0;
  bool diverged = false;
  std::string message;
};

/// Builds the reduced-width detector for the config, with k-means anchors.
netdef::Model<float> make_toy_model(const ToyConfig& cfg);

/// Fresh synthetic batches every step, plain SGD, deterministic for a seed.
/// The progress callback (if any) sees every history row as it is recorded.
ToyResult train_toy(const ToyConfig& cfg,
                    const std::function<void(const HistoryRow&)>& progress = {});

/// Held-out evaluation: inference with running statistics, decode, Soft-NMS,
/// then mAP at the IoU threshold.
post::EvalReport evaluate_model(const netdef::Model<float>& model,
                                const std::vector<Sample>& samples, double iou_thresh = 0.5,
                                const post::SoftNmsConfig& nms = {});

/// CSV with columns step,loss_total,loss_box,loss_obj,loss_cls,map.
void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history);

}  // namespace edgeyolo::training
