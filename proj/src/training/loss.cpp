#include "edgeyolo/training/loss.hpp"

#include <algorithm>
#include <cmath>

#include "edgeyolo/dual.hpp"
#include "edgeyolo/postprocess/box.hpp"

namespace edgeyolo::training {

double bce(double p, double y) {
  const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <class D>
D sig(const D& x) {
  return D(1.0) / (D(1.0) + exp(-x));
}

/// dBCE(sig(z), y)/dz, zero where the clamp is active.
double bce_grad(double z, double y) {
  const double p = sig(z);
  if (p < kProbClamp || p > 1.0 - kProbClamp) {
    return 0.0;
  }
  return p - y;
}

template <class T>
void check_finite(const netdef::HeadOutput<T>& h) {
  for (std::size_t i = 0; i < h.raw.size(); ++i) {
    if (!std::isfinite(static_cast<double>(h.raw.values()[i]))) {
      throw TrainingError("non-finite logit in head " + std::to_string(h.scale_index) +
                          " at flat index " + std::to_string(i));
    }
  }
}

template <class T>
LossReport run(const std::vector<netdef::HeadOutput<T>>& heads,
               const std::vector<TargetAssignment>& targets, const LossConfig& cfg,
               std::vector<Tensor<T>>* grads) {
  LossReport r;
  if (heads.empty()) {
    throw std::invalid_argument("loss needs at least one head");
  }
  const int n = heads[0].raw.shape().n;
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("loss: " + std::to_string(targets.size()) +
                                " target sets for a batch of " + std::to_string(n));
  }
  const double inv_n = 1.0 / n;
  if (grads) {
    grads->clear();
    for (const auto& h : heads) {
      grads->emplace_back(h.raw.shape());
    }
  }
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& head = heads[k];
    check_finite(head);
    const Shape s = head.raw.shape();
    for (int b = 0; b < n; ++b) {
      const TargetAssignment& t = targets[b];
      if (head.scale_index < 0 || head.scale_index >= static_cast<int>(t.scales.size())) {
        throw std::invalid_argument("loss: no targets for head scale " +
                                    std::to_string(head.scale_index));
      }
      const ScaleTargets& st = t.scales[head.scale_index];
      const int per = 5 + t.num_classes;
      const int num_a = static_cast<int>(st.anchors.size());
      if (s.n != n || s.c != num_a * per || s.w != st.grid.w || s.h != st.grid.h) {
        throw std::invalid_argument("loss: head " + s.str() + " does not match targets");
      }
      const double sx = static_cast<double>(t.img_w) / s.w;
      const double sy = static_cast<double>(t.img_h) / s.h;
      for (int a = 0; a < num_a; ++a) {
        const int base = a * per;
        for (int y = 0; y < s.h; ++y) {
          for (int x = 0; x < s.w; ++x) {
            const auto raw = [&](int c) {
              return static_cast<double>(head.raw.at(b, base + c, y, x));
            };
            const auto add_grad = [&](int c, double g) {
              if (grads) {
                (*grads)[k].at(b, base + c, y, x) += static_cast<T>(g * inv_n);
              }
            };
            const int pi = st.at(a, y, x);
            const double z_obj = raw(4);
            if (pi < 0) {
              r.obj += cfg.lambda_noobj * bce(sig(z_obj), 0.0) * inv_n;
              add_grad(4, cfg.lambda_noobj * bce_grad(z_obj, 0.0));
              continue;
            }
            const Positive& p = t.positives[pi];
            using D = Dual<4>;
            const D tx = D::variable(raw(0), 0);
            const D ty = D::variable(raw(1), 1);
            const D tw = D::variable(raw(2), 2);
            const D th = D::variable(raw(3), 3);
            const post::BoxT<D> pred{(sig(tx) + D(x)) * D(sx), (sig(ty) + D(y)) * D(sy),
                                     D(st.anchors[a].w) * exp(tw),
                                     D(st.anchors[a].h) * exp(th)};
            const post::BoxT<D> gt{p.gt.box.cx, p.gt.box.cy, p.gt.box.w, p.gt.box.h};
            const D l = cfg.box == BoxLoss::Ciou ? post::ciou_loss(pred, gt)
                                                 : post::diou_loss(pred, gt);
            r.box += l.v * inv_n;
            for (int c = 0; c < 4; ++c) {
              add_grad(c, l.d[c]);
            }
            r.obj += bce(sig(z_obj), 1.0) * inv_n;
            add_grad(4, bce_grad(z_obj, 1.0));
            for (int c = 0; c < t.num_classes; ++c) {
              const double target = c == p.gt.class_id ? 1.0 : 0.0;
              const double z = raw(5 + c);
              r.cls += bce(sig(z), target) * inv_n;
              add_grad(5 + c, bce_grad(z, target));
            }
          }
        }
      }
    }
  }
  r.total = r.box + r.obj + r.cls;
  return r;
}

}  // namespace

template <class T>
LossReport total_loss(const std::vector<netdef::HeadOutput<T>>& heads,
                      const std::vector<TargetAssignment>& targets, const LossConfig& cfg) {
  return run<T>(heads, targets, cfg, nullptr);
}

template <class T>
LossAndGrad<T> loss_and_grad(const std::vector<netdef::HeadOutput<T>>& heads,
                             const std::vector<TargetAssignment>& targets,
                             const LossConfig& cfg) {
  LossAndGrad<T> out;
  out.loss = run<T>(heads, targets, cfg, &out.grads);
  return out;
}

template LossReport total_loss(const std::vector<netdef::HeadOutput<float>>&,
                               const std::vector<TargetAssignment>&, const LossConfig&);
template LossReport total_loss(const std::vector<netdef::HeadOutput<double>>&,
                               const std::vector<TargetAssignment>&, const LossConfig&);
template LossAndGrad<float> loss_and_grad(const std::vector<netdef::HeadOutput<float>>&,
                                          const std::vector<TargetAssignment>&,
                                          const LossConfig&);
template LossAndGrad<double> loss_and_grad(const std::vector<netdef::HeadOutput<double>>&,
                                           const std::vector<TargetAssignment>&,
                                           const LossConfig&);

}  // namespace edgeyolo::training
