#pragma once

#include "edgeyolo/netdef/model.hpp"
#include "edgeyolo/training/loss.hpp"

namespace edgeyolo::training {

struct OptimizerConfig {
  double eta = 0.0002;
  int batch = 16;
  int steps = 0;
  /// Running-average momentum of batch-norm statistics.
  double bn_momentum = 0.9;
};

template <class T>
struct Gradients {
  LossReport loss;
  std::vector<netdef::LayerGrads<T>> grads;
  netdef::ForwardCache<T> cache;
};

/// Loss of `batch` (n images, targets[i] for image i) and its gradient with
/// respect to every parameter.
template <class T>
Gradients<T> compute_gradients(const netdef::Model<T>& model, const Tensor<T>& batch,
                               const std::vector<TargetAssignment>& targets,
                               const LossConfig& loss = {},
                               netdef::BnMode mode = netdef::BnMode::Batch);

/// One plain SGD step, theta <- theta - eta * grad, with batch statistics in
/// the forward pass; running batch-norm averages are then updated. Returns
/// the loss before the step. A non-finite gradient throws TrainingError
/// naming the layer and leaves the model untouched.
template <class T>
LossReport backward_and_step(netdef::Model<T>& model, const Tensor<T>& batch,
                             const std::vector<TargetAssignment>& targets,
                             const OptimizerConfig& opt, const LossConfig& loss = {});

}  // namespace edgeyolo::training
