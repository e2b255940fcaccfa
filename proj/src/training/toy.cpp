#include "edgeyolo/training/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "edgeyolo/anchors/kmeans.hpp"

namespace edgeyolo::training {

namespace {

// Independent streams derived from the one user seed.
enum Stream : std::uint64_t { kInit = 1, kAnchors = 2, kTrain = 3, kEval = 4 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

netdef::Model<float> make_toy_model(const ToyConfig& cfg) {
  Rng rng(stream_seed(cfg.seed, kAnchors));
  std::vector<Anchor> extents;
  while (static_cast<int>(extents.size()) < cfg.anchor_samples) {
    for (const auto& g : make_sample(rng, cfg.shapes).gts) {
      extents.push_back({g.box.w, g.box.h});
    }
  }
  anchors::KMeansOptions ko;
  ko.k = 3 * cfg.anchors_per_scale;
  ko.seed = cfg.seed;
  ko.norm_w = cfg.shapes.size;
  ko.norm_h = cfg.shapes.size;
  const AnchorSet set = anchors::kmeans_anchors(extents, ko).anchor_set(3);
  netdef::Model<float> model(netdef::build_edge_yolo(
      cfg.shapes.num_classes, set, cfg.anchors_per_scale,
      {.input_size = cfg.shapes.size, .width_divisor = cfg.width_divisor}));
  model.init_random(stream_seed(cfg.seed, kInit));
  return model;
}

post::EvalReport evaluate_model(const netdef::Model<float>& model,
                                const std::vector<Sample>& samples, double iou_thresh,
                                const post::SoftNmsConfig& nms) {
  const netdef::Graph& g = model.graph();
  std::vector<std::vector<post::Detection>> preds;
  std::vector<std::vector<post::GroundTruth>> gts;
  constexpr std::size_t kChunk = 16;
  for (std::size_t first = 0; first < samples.size(); first += kChunk) {
    const std::size_t n = std::min(kChunk, samples.size() - first);
    const auto heads = model.forward(stack_images(samples, first, n));
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(post::soft_nms(
          post::decode_all(heads, g, nms.score_floor, static_cast<int>(i)), nms));
      gts.push_back(samples[first + i].gts);
    }
  }
  return post::evaluate(preds, gts, g.num_classes, iou_thresh);
}

ToyResult train_toy(const ToyConfig& cfg,
                    const std::function<void(const HistoryRow&)>& progress) {
  ToyResult r;
  r.model = make_toy_model(cfg);
  Rng eval_rng(stream_seed(cfg.seed, kEval));
  const auto held_out = make_samples(eval_rng, cfg.shapes, cfg.eval_images);
  Rng train_rng(stream_seed(cfg.seed, kTrain));
  OptimizerConfig opt;
  opt.eta = cfg.eta;
  opt.batch = cfg.batch;
  opt.steps = cfg.steps;

  const auto record = [&](HistoryRow row) {
    r.history.push_back(row);
    if (progress) progress(row);
  };
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = make_samples(train_rng, cfg.shapes, cfg.batch);
    std::vector<TargetAssignment> targets;
    for (const auto& s : batch) {
      targets.push_back(assign_targets(s.gts, r.model.graph()));
    }
    HistoryRow row;
    row.step = step;
    try {
      row.loss = backward_and_step(r.model, stack_images(batch, 0, batch.size()), targets,
                                   opt, cfg.loss);
    } catch (const TrainingError& e) {
      r.diverged = true;
      r.message = std::string("step ") + std::to_string(step) + ": " + e.what();
      return r;
    }
    const bool last = step + 1 == cfg.steps;
    if (last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0)) {
      row.map = evaluate_model(r.model, held_out).map;
    }
    record(row);
    if (!(row.loss.total <= cfg.divergence)) {
      r.diverged = true;
      r.message = "loss " + std::to_string(row.loss.total) + " at step " +
                  std::to_string(step) + " exceeds the divergence bound";
      return r;
    }
  }
  if (!r.history.empty()) {
    r.initial_loss = r.history.front().loss.total;
    const std::size_t tail = std::min<std::size_t>(10, r.history.size());
    double sum = 0.0;
    for (std::size_t i = r.history.size() - tail; i < r.history.size(); ++i) {
      sum += r.history[i].loss.total;
    }
    r.final_loss = sum / tail;
    r.final_map = r.history.back().map.value_or(0.0);
  } else {
    r.final_map = evaluate_model(r.model, held_out).map;
  }
  return r;
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history) {
  out << "step,loss_total,loss_box,loss_obj,loss_cls,map\n";
  char buf[160];
  for (const HistoryRow& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,", h.step, h.loss.total,
                  h.loss.box, h.loss.obj, h.loss.cls);
    out << buf;
    if (h.map) {
      std::snprintf(buf, sizeof buf, "%.6f", *h.map);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace edgeyolo::training
