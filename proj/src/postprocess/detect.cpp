#include "edgeyolo/postprocess/detect.hpp"

#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace edgeyolo::post {

std::vector<Detection> decode(const netdef::HeadOutput<float>& head,
                              const std::vector<Anchor>& anchors, int num_classes,
                              int img_w, int img_h, double score_floor, int batch) {
  const Shape s = head.raw.shape();
  const int per = 5 + num_classes;
  if (num_classes < 1 || s.c % per != 0 ||
      s.c / per != static_cast<int>(anchors.size())) {
    throw std::invalid_argument("head has " + std::to_string(s.c) + " channels, expected " +
                                std::to_string(anchors.size()) + " anchors x " +
                                std::to_string(per));
  }
  if (batch < 0 || batch >= s.n) {
    throw std::out_of_range("decode batch index out of range");
  }
  const double sx = static_cast<double>(img_w) / s.w;
  const double sy = static_cast<double>(img_h) / s.h;
  std::vector<Detection> out;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const int base = static_cast<int>(a) * per;
    const float* tx = head.raw.plane(batch, base + 0);
    const float* ty = head.raw.plane(batch, base + 1);
    const float* tw = head.raw.plane(batch, base + 2);
    const float* th = head.raw.plane(batch, base + 3);
    const float* to = head.raw.plane(batch, base + 4);
    for (int cy = 0; cy < s.h; ++cy) {
      for (int cx = 0; cx < s.w; ++cx) {
        const std::size_t i = static_cast<std::size_t>(cy) * s.w + cx;
        int best = 0;
        float best_logit = head.raw.plane(batch, base + 5)[i];
        for (int k = 1; k < num_classes; ++k) {
          const float l = head.raw.plane(batch, base + 5 + k)[i];
          if (l > best_logit) {
            best_logit = l;
            best = k;
          }
        }
        const double score = sigmoid(to[i]) * sigmoid(best_logit);
        if (score < score_floor) {
          continue;
        }
        Detection d;
        d.box.cx = (sigmoid(tx[i]) + cx) * sx;
        d.box.cy = (sigmoid(ty[i]) + cy) * sy;
        d.box.w = anchors[a].w * std::exp(static_cast<double>(tw[i]));
        d.box.h = anchors[a].h * std::exp(static_cast<double>(th[i]));
        d.class_id = best;
        d.score = score;
        out.push_back(d);
      }
    }
  }
  return out;
}

std::vector<Detection> decode_all(const std::vector<netdef::HeadOutput<float>>& heads,
                                  const netdef::Graph& g, double score_floor, int batch) {
  std::vector<Detection> out;
  for (const auto& h : heads) {
    auto part = decode(h, g.anchors.for_scale(h.scale_index), g.num_classes, g.in_w,
                       g.in_h, score_floor, batch);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

namespace {

std::size_t argmax_score(const std::vector<Detection>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].score > v[best].score) {
      best = i;
    }
  }
  return best;
}

}  // namespace

std::vector<Detection> soft_nms(std::vector<Detection> dets, const SoftNmsConfig& cfg) {
  std::vector<Detection> out;
  std::erase_if(dets, [&](const Detection& d) { return d.score < cfg.score_floor; });
  while (!dets.empty()) {
    const std::size_t m = argmax_score(dets);
    const Detection top = dets[m];
    dets.erase(dets.begin() + static_cast<long>(m));
    out.push_back(top);
    for (Detection& d : dets) {
      if (d.class_id != top.class_id) {
        continue;
      }
      const double o = iou(top.box, d.box);
      if (o >= cfg.t_nms) {
        d.score *= std::exp(-o / cfg.sigma);
      }
    }
    std::erase_if(dets, [&](const Detection& d) { return d.score < cfg.score_floor; });
  }
  return out;
}

std::vector<Detection> hard_nms(std::vector<Detection> dets, double t_nms) {
  std::vector<Detection> out;
  while (!dets.empty()) {
    const std::size_t m = argmax_score(dets);
    const Detection top = dets[m];
    dets.erase(dets.begin() + static_cast<long>(m));
    out.push_back(top);
    std::erase_if(dets, [&](const Detection& d) {
      return d.class_id == top.class_id && iou(top.box, d.box) >= t_nms;
    });
  }
  return out;
}

void write_jsonl(std::ostream& out, const std::string& image,
                 const std::vector<Detection>& dets) {
  for (const Detection& d : dets) {
    const nlohmann::json j = {{"image", image}, {"class", d.class_id}, {"score", d.score},
                              {"cx", d.box.cx},  {"cy", d.box.cy},     {"w", d.box.w},
                              {"h", d.box.h}};
    out << j.dump() << '\n';
  }
}

}  // namespace edgeyolo::post
