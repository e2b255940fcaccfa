#include "edgeyolo/training/targets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace edgeyolo::training {

double shape_iou(double w0, double h0, double w1, double h1) {
  const double inter = std::min(w0, w1) * std::min(h0, h1);
  const double uni = w0 * h0 + w1 * h1 - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

struct Candidate {
  int scale;
  int anchor;
  double iou;
};

struct Pending {
  GroundTruth gt;
  std::vector<Candidate> ranked;
};

int cell_of(double c, int extent, int cells) {
  const int i = static_cast<int>(std::floor(c * cells / extent));
  return std::clamp(i, 0, cells - 1);
}

}  // namespace

TargetAssignment assign_targets(const std::vector<GroundTruth>& gts, const AnchorSet& anchors,
                                const std::vector<GridSize>& grids, int img_w, int img_h,
                                int num_classes) {
  if (static_cast<int>(grids.size()) != anchors.scales) {
    throw std::invalid_argument("assign_targets: " + std::to_string(grids.size()) +
                                " grids for " + std::to_string(anchors.scales) +
                                " anchor scales");
  }
  TargetAssignment t;
  t.img_w = img_w;
  t.img_h = img_h;
  t.num_classes = num_classes;
  for (int s = 0; s < anchors.scales; ++s) {
    ScaleTargets st;
    st.grid = grids[s];
    st.anchors = anchors.for_scale(s);
    st.slot.assign(st.anchors.size() * grids[s].w * grids[s].h, -1);
    t.scales.push_back(std::move(st));
  }

  std::vector<Pending> pending;
  for (const GroundTruth& g : gts) {
    const post::Box& b = g.box;
    if (!(b.w > 0) || !(b.h > 0)) {
      throw std::invalid_argument("ground truth with zero extent");
    }
    if (!(b.cx >= 0 && b.cx <= img_w && b.cy >= 0 && b.cy <= img_h)) {
      throw std::invalid_argument("ground truth center outside the image");
    }
    if (g.class_id < 0 || g.class_id >= num_classes) {
      throw std::invalid_argument("ground truth class " + std::to_string(g.class_id) +
                                  " out of range");
    }
    Pending p{g, {}};
    for (int s = 0; s < anchors.scales; ++s) {
      for (int a = 0; a < anchors.per_scale(); ++a) {
        const Anchor& an = t.scales[s].anchors[a];
        p.ranked.push_back({s, a, shape_iou(b.w, b.h, an.w, an.h)});
      }
    }
    std::stable_sort(p.ranked.begin(), p.ranked.end(), [&](const Candidate& x, const Candidate& y) {
      if (x.iou != y.iou) return x.iou > y.iou;
      return anchors.flat_index(x.scale, x.anchor) < anchors.flat_index(y.scale, y.anchor);
    });
    pending.push_back(std::move(p));
  }
  std::stable_sort(pending.begin(), pending.end(), [](const Pending& x, const Pending& y) {
    const double xi = x.ranked.empty() ? 0.0 : x.ranked[0].iou;
    const double yi = y.ranked.empty() ? 0.0 : y.ranked[0].iou;
    const post::Box& a = x.gt.box;
    const post::Box& b = y.gt.box;
    return std::tie(yi, a.cx, a.cy, a.w, a.h, x.gt.class_id) <
           std::tie(xi, b.cx, b.cy, b.w, b.h, y.gt.class_id);
  });

  for (const Pending& p : pending) {
    bool placed = false;
    for (const Candidate& c : p.ranked) {
      ScaleTargets& st = t.scales[c.scale];
      const int x = cell_of(p.gt.box.cx, img_w, st.grid.w);
      const int y = cell_of(p.gt.box.cy, img_h, st.grid.h);
      int& slot = st.at(c.anchor, y, x);
      if (slot >= 0) {
        continue;
      }
      slot = static_cast<int>(t.positives.size());
      t.positives.push_back({c.scale, x, y, c.anchor, p.gt});
      placed = true;
      break;
    }
    if (!placed) {
      throw std::invalid_argument("no free anchor slot left for a ground truth");
    }
  }
  return t;
}

TargetAssignment assign_targets(const std::vector<GroundTruth>& gts, const netdef::Graph& g) {
  std::vector<GridSize> grids;
  for (int l : g.head_layers()) {
    grids.push_back({g.layers[l].out.w, g.layers[l].out.h});
  }
  return assign_targets(gts, g.anchors, grids, g.in_w, g.in_h, g.num_classes);
}

}  // namespace edgeyolo::training
