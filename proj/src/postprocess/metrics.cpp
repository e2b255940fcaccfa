#include "edgeyolo/postprocess/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace edgeyolo::post {

double average_precision(const std::vector<bool>& ranked_is_tp, int num_gt) {
  if (num_gt <= 0) {
    return 0.0;
  }
  const std::size_t n = ranked_is_tp.size();
  std::vector<double> prec(n), rec(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += ranked_is_tp[i] ? 1 : 0;
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    rec[i] = static_cast<double>(tp) / num_gt;
  }
  for (std::size_t i = n; i-- > 1;) {
    prec[i - 1] = std::max(prec[i - 1], prec[i]);
  }
  double ap = 0.0;
  double prev_rec = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rec[i] > prev_rec) {
      ap += (rec[i] - prev_rec) * prec[i];
      prev_rec = rec[i];
    }
  }
  return ap;
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& preds,
                    const std::vector<std::vector<GroundTruth>>& gts, int num_classes,
                    double iou_thresh) {
  if (preds.size() != gts.size()) {
    throw std::invalid_argument("evaluate: prediction and ground-truth image counts differ");
  }
  auto check_class = [&](int c) {
    if (c < 0 || c >= num_classes) {
      throw std::out_of_range("class id " + std::to_string(c) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  };
  struct Ranked {
    double score;
    std::size_t image;
    std::size_t pos;
  };
  std::vector<std::vector<Ranked>> by_class(num_classes);
  EvalReport r;
  r.classes.resize(num_classes);
  for (std::size_t img = 0; img < preds.size(); ++img) {
    for (std::size_t k = 0; k < preds[img].size(); ++k) {
      check_class(preds[img][k].class_id);
      by_class[preds[img][k].class_id].push_back({preds[img][k].score, img, k});
    }
    for (const GroundTruth& g : gts[img]) {
      check_class(g.class_id);
      ++r.classes[g.class_id].num_gt;
    }
  }
  int classes_with_gt = 0;
  double ap_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    auto& ranked = by_class[c];
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (a.score != b.score) {
        return a.score > b.score;
      }
      return a.image != b.image ? a.image < b.image : a.pos < b.pos;
    });
    std::vector<std::vector<bool>> used(gts.size());
    for (std::size_t img = 0; img < gts.size(); ++img) {
      used[img].assign(gts[img].size(), false);
    }
    std::vector<bool> is_tp;
    is_tp.reserve(ranked.size());
    ClassStats& st = r.classes[c];
    for (const Ranked& rk : ranked) {
      const Box& b = preds[rk.image][rk.pos].box;
      const auto& cand = gts[rk.image];
      double best = -1.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < cand.size(); ++j) {
        if (cand[j].class_id != c || used[rk.image][j]) {
          continue;
        }
        const double o = iou(b, cand[j].box);
        if (o > best) {
          best = o;
          best_j = j;
        }
      }
      const bool hit = best >= iou_thresh;
      if (hit) {
        used[rk.image][best_j] = true;
        ++st.tp;
      } else {
        ++st.fp;
      }
      is_tp.push_back(hit);
    }
    st.fn = st.num_gt - st.tp;
    st.precision = st.tp + st.fp > 0 ? static_cast<double>(st.tp) / (st.tp + st.fp) : 0.0;
    st.recall = st.num_gt > 0 ? static_cast<double>(st.tp) / (st.tp + st.fn) : 0.0;
    st.ap = average_precision(is_tp, st.num_gt);
    if (st.num_gt > 0) {
      ++classes_with_gt;
      ap_sum += st.ap;
    }
    r.tp += st.tp;
    r.fp += st.fp;
    r.fn += st.fn;
  }
  r.map = classes_with_gt > 0 ? ap_sum / classes_with_gt : 0.0;
  return r;
}

}  // namespace edgeyolo::post
