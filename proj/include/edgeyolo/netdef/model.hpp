#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "edgeyolo/netdef/graph.hpp"
#include "edgeyolo/nn/layers.hpp"

namespace edgeyolo::netdef {

/// Parameters of one conv layer (batch norm present only for CBL layers).
template <class T>
struct LayerParams {
  nn::ConvParams<T> conv;
  std::optional<nn::BatchNormParams<T>> bn;
};

/// Gradient buffers mirroring LayerParams.
template <class T>
struct LayerGrads {
  std::vector<T> weights;
  std::vector<T> bias;
  std::vector<T> gamma;
  std::vector<T> beta;
};

/// Raw predictions of one head: (n, A*(5+C), S, S), channel layout per
/// anchor a: [t_x, t_y, t_w, t_h, objectness, class_0 .. class_{C-1}].
template <class T>
struct HeadOutput {
  int scale_index = 0;
  int layer = 0;
  Tensor<T> raw;

  int grid_h() const { return raw.shape().h; }
  int grid_w() const { return raw.shape().w; }
};

enum class BnMode { Running, Batch };

/// Activations kept by forward_train for the backward pass.
template <class T>
struct ForwardCache {
  Tensor<T> input;
  std::vector<Tensor<T>> outputs;
  std::vector<Tensor<T>> conv_out;  // conv result before batch norm
  std::vector<Tensor<T>> pre_act;   // batch norm result before activation
  std::vector<nn::BatchStats<T>> stats;
  BnMode mode = BnMode::Batch;
};

/// A graph plus its parameter blobs. Immutable during inference, so forward
/// may be called concurrently; training mutates it through apply_sgd.
template <class T>
class Model {
 public:
  Model() = default;
  explicit Model(Graph g);

  const Graph& graph() const { return graph_; }
  bool weighted() const { return weighted_; }

  /// Indexed by layer; entries of non-conv layers are unused.
  std::vector<LayerParams<T>>& params() { return params_; }
  const std::vector<LayerParams<T>>& params() const { return params_; }

  void init_zero();
  /// He-normal conv weights, identity batch norm, zero bias.
  void init_random(std::uint64_t seed);

  std::size_t parameter_count() const;

  std::vector<HeadOutput<T>> forward(const Tensor<T>& input) const;

  std::vector<HeadOutput<T>> forward_train(const Tensor<T>& input,
                                           ForwardCache<T>& cache,
                                           BnMode mode = BnMode::Batch) const;

  /// head_grads[k] is dL/d(raw) of the k-th head returned by forward_train.
  std::vector<LayerGrads<T>> backward(const ForwardCache<T>& cache,
                                      const std::vector<Tensor<T>>& head_grads) const;

  /// theta <- theta - eta * grad for conv weights, bias, and bn gamma/beta.
  void apply_sgd(const std::vector<LayerGrads<T>>& grads, T eta);

  /// Folds the cached batch statistics into the running averages.
  void update_running_stats(const ForwardCache<T>& cache, T momentum = T(0.9));

  template <class U>
  Model<U> cast() const;

  void set_weighted(bool w) { weighted_ = w; }

 private:
  void check_input(const Tensor<T>& input) const;

  Graph graph_;
  std::vector<LayerParams<T>> params_;
  bool weighted_ = false;
};

template <class T>
template <class U>
Model<U> Model<T>::cast() const {
  Model<U> out(graph_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const LayerParams<T>& src = params_[i];
    LayerParams<U>& dst = out.params()[i];
    dst.conv.kernel = src.conv.kernel;
    dst.conv.stride = src.conv.stride;
    dst.conv.filters = src.conv.filters;
    dst.conv.weights = src.conv.weights.template cast<U>();
    dst.conv.bias.assign(src.conv.bias.begin(), src.conv.bias.end());
    if (src.bn) {
      nn::BatchNormParams<U> bn;
      bn.gamma.assign(src.bn->gamma.begin(), src.bn->gamma.end());
      bn.beta.assign(src.bn->beta.begin(), src.bn->beta.end());
      bn.running_mean.assign(src.bn->running_mean.begin(), src.bn->running_mean.end());
      bn.running_var.assign(src.bn->running_var.begin(), src.bn->running_var.end());
      bn.eps = static_cast<U>(src.bn->eps);
      dst.bn = std::move(bn);
    }
  }
  out.set_weighted(weighted_);
  return out;
}

}  // namespace edgeyolo::netdef
