#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "edgeyolo/anchor_set.hpp"
#include "edgeyolo/netdef/model.hpp"
#include "edgeyolo/postprocess/box.hpp"

namespace edgeyolo::post {

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Decodes one image (`batch` index) of a head tensor. For cell (cx, cy)
/// and anchor (pw, ph) of an S-grid over an img_w x img_h input:
///   bx = (sig(tx) + cx) * img_w / S,  bw = pw * exp(tw),
///   score = sig(obj) * sig(class logit) for the arg-max class.
/// Emits one detection per anchor cell whose score is >= score_floor.
std::vector<Detection> decode(const netdef::HeadOutput<float>& head,
                              const std::vector<Anchor>& anchors, int num_classes,
                              int img_w, int img_h, double score_floor = 0.001,
                              int batch = 0);

/// Decodes all heads of a forward pass with the graph's anchors.
std::vector<Detection> decode_all(const std::vector<netdef::HeadOutput<float>>& heads,
                                  const netdef::Graph& g, double score_floor = 0.001,
                                  int batch = 0);

struct SoftNmsConfig {
  double sigma = 0.5;
  double t_nms = 0.45;
  double score_floor = 0.001;
};

/// Gaussian Soft-NMS. Repeatedly moves the top-scoring candidate M (lowest
/// index on ties) to the output; every remaining same-class candidate b with
/// IoU(M, b) >= t_nms is rescaled by exp(-IoU(M, b) / sigma), and candidates
/// falling below score_floor are dropped. Output is in selection order, so
/// scores are non-increasing.
std::vector<Detection> soft_nms(std::vector<Detection> dets, const SoftNmsConfig& cfg = {});

/// Classic per-class NMS: keep the top box, delete same-class boxes with
/// IoU >= t_nms.
std::vector<Detection> hard_nms(std::vector<Detection> dets, double t_nms);

/// One JSON object per line: {"image","class","score","cx","cy","w","h"}.
void write_jsonl(std::ostream& out, const std::string& image,
                 const std::vector<Detection>& dets);

}  // namespace edgeyolo::post
