#pragma once

#include <stdexcept>
#include <vector>

#include "edgeyolo/netdef/model.hpp"
#include "edgeyolo/training/targets.hpp"

namespace edgeyolo::training {

enum class BoxLoss { Ciou, Diou };

struct LossConfig {
  /// Weight of the objectness term on negative slots.
  double lambda_noobj = 0.5;
  BoxLoss box = BoxLoss::Ciou;
};

/// Per-image average over the batch; total == box + obj + cls.
struct LossReport {
  double box = 0.0;
  double obj = 0.0;
  double cls = 0.0;
  double total = 0.0;
};

inline constexpr double kProbClamp = 1e-7;

/// -(y log p + (1 - y) log(1 - p)) with p clamped to [1e-7, 1 - 1e-7].
double bce(double p, double y);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct LossAndGrad {
  LossReport loss;
  /// dL/d(raw), one tensor per head, in the order of `heads`.
  std::vector<Tensor<T>> grads;
};

/// Box term: box loss between the decoded prediction and the ground truth on
/// every positive slot. Objectness term: BCE(sig(obj), 1) on positives and
/// lambda_noobj * BCE(sig(obj), 0) on negatives. Class term: BCE of every
/// class logit against the one-hot target on positives. targets[i] belongs
/// to batch image i. Throws TrainingError on a non-finite logit and
/// std::invalid_argument on inconsistent shapes.
template <class T>
LossReport total_loss(const std::vector<netdef::HeadOutput<T>>& heads,
                      const std::vector<TargetAssignment>& targets, const LossConfig& cfg = {});

/// total_loss plus its gradient with respect to every raw head output. A
/// clamped probability contributes no gradient.
template <class T>
LossAndGrad<T> loss_and_grad(const std::vector<netdef::HeadOutput<T>>& heads,
                             const std::vector<TargetAssignment>& targets,
                             const LossConfig& cfg = {});

}  // namespace edgeyolo::training
