#include "edgeyolo/training/sgd.hpp"

#include <cmath>

namespace edgeyolo::training {

template <class T>
Gradients<T> compute_gradients(const netdef::Model<T>& model, const Tensor<T>& batch,
                               const std::vector<TargetAssignment>& targets,
                               const LossConfig& loss, netdef::BnMode mode) {
  Gradients<T> g;
  const auto heads = model.forward_train(batch, g.cache, mode);
  auto lg = loss_and_grad(heads, targets, loss);
  g.loss = lg.loss;
  g.grads = model.backward(g.cache, lg.grads);
  return g;
}

namespace {

template <class T>
const char* first_non_finite(const netdef::LayerGrads<T>& g) {
  const auto bad = [](const std::vector<T>& v) {
    for (T x : v) {
      if (!std::isfinite(static_cast<double>(x))) return true;
    }
    return false;
  };
  if (bad(g.weights)) return "weights";
  if (bad(g.bias)) return "bias";
  if (bad(g.gamma)) return "gamma";
  if (bad(g.beta)) return "beta";
  return nullptr;
}

}  // namespace

template <class T>
LossReport backward_and_step(netdef::Model<T>& model, const Tensor<T>& batch,
                             const std::vector<TargetAssignment>& targets,
                             const OptimizerConfig& opt, const LossConfig& loss) {
  if (!(opt.eta >= 0)) {
    throw std::invalid_argument("learning rate must be non-negative");
  }
  if (batch.shape().n < 1) {
    throw std::invalid_argument("empty batch");
  }
  const Gradients<T> g = compute_gradients(model, batch, targets, loss);
  for (std::size_t i = 0; i < g.grads.size(); ++i) {
    if (const char* what = first_non_finite(g.grads[i])) {
      throw TrainingError("non-finite " + std::string(what) + " gradient in layer " +
                          std::to_string(i) + " (loss " + std::to_string(g.loss.total) + ")");
    }
  }
  model.apply_sgd(g.grads, static_cast<T>(opt.eta));
  model.update_running_stats(g.cache, static_cast<T>(opt.bn_momentum));
  return g.loss;
}

template Gradients<float> compute_gradients(const netdef::Model<float>&, const Tensor<float>&,
                                            const std::vector<TargetAssignment>&,
                                            const LossConfig&, netdef::BnMode);
template Gradients<double> compute_gradients(const netdef::Model<double>&,
                                             const Tensor<double>&,
                                             const std::vector<TargetAssignment>&,
                                             const LossConfig&, netdef::BnMode);
template LossReport backward_and_step(netdef::Model<float>&, const Tensor<float>&,
                                      const std::vector<TargetAssignment>&,
                                      const OptimizerConfig&, const LossConfig&);
template LossReport backward_and_step(netdef::Model<double>&, const Tensor<double>&,
                                      const std::vector<TargetAssignment>&,
                                      const OptimizerConfig&, const LossConfig&);

}  // namespace edgeyolo::training
