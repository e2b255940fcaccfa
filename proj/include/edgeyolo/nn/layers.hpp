#pragma once

// Layer kernels of the detector graph: convolution, batch normalization,
// activations, max-pooling, nearest upsampling and route. Forward functions
// are pure; each has a matching *_backward used by training. All functions
// are instantiated for float (inference/training) and double (gradient
// checks).

#include <optional>
#include <string_view>
#include <vector>

#include "edgeyolo/tensor.hpp"

namespace edgeyolo::nn {

enum class Activation { Linear, Leaky, Relu, Mish };

std::string_view activation_name(Activation a);
std::optional<Activation> parse_activation(std::string_view name);

inline constexpr double kDefaultLeakySlope = 0.1;

/// Same-padded convolution parameters; weights are (filters, cin, k, k).
template <class T>
struct ConvParams {
  int kernel = 1;
  int stride = 1;
  int filters = 1;
  Tensor<T> weights;
  std::vector<T> bias;

  int pad() const { return kernel / 2; }
  int in_channels() const { return weights.shape().c; }

  static ConvParams zeros(int cin, int kernel, int stride, int filters);
};

template <class T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = T(1e-5);

  static BatchNormParams identity(int channels);
  std::size_t channels() const { return gamma.size(); }
};

/// Per-channel statistics of one training batch.
template <class T>
struct BatchStats {
  std::vector<T> mean;
  std::vector<T> var;
};

Shape conv_output_shape(const Shape& in, int kernel, int stride, int filters);
Shape pool_output_shape(const Shape& in, int kernel, int stride);

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p);

/// Returns dL/dinput and accumulates dL/dweights, dL/dbias into the given
/// vectors (sized like p.weights and p.bias).
template <class T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                          const Tensor<T>& grad_out, std::vector<T>& grad_weights,
                          std::vector<T>& grad_bias);

/// Inference form: running statistics folded into a per-channel affine map.
/// Both backward forms accumulate into grad_gamma and grad_beta.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& input, const BatchNormParams<T>& p);

template <class T>
Tensor<T> batch_norm_backward(const Tensor<T>& input, const BatchNormParams<T>& p,
                              const Tensor<T>& grad_out, std::vector<T>& grad_gamma,
                              std::vector<T>& grad_beta);

/// Training form: normalizes with the batch's own statistics, reported in
/// `stats` so the caller can update running averages.
template <class T>
Tensor<T> batch_norm_train(const Tensor<T>& input, const BatchNormParams<T>& p,
                           BatchStats<T>& stats);

template <class T>
Tensor<T> batch_norm_train_backward(const Tensor<T>& input,
                                    const BatchNormParams<T>& p,
                                    const BatchStats<T>& stats,
                                    const Tensor<T>& grad_out,
                                    std::vector<T>& grad_gamma,
                                    std::vector<T>& grad_beta);

/// running <- momentum * running + (1 - momentum) * batch
template <class T>
void update_running_stats(BatchNormParams<T>& p, const BatchStats<T>& stats,
                          T momentum);

template <class T>
Tensor<T> activate(const Tensor<T>& input, Activation kind,
                   T slope = T(kDefaultLeakySlope));

/// Gradient w.r.t. the activation's input, given that input.
template <class T>
Tensor<T> activate_backward(const Tensor<T>& input, const Tensor<T>& grad_out,
                            Activation kind, T slope = T(kDefaultLeakySlope));

template <class T>
Tensor<T> max_pool(const Tensor<T>& input, int kernel, int stride);

template <class T>
Tensor<T> max_pool_backward(const Tensor<T>& input, int kernel, int stride,
                            const Tensor<T>& grad_out);

template <class T>
Tensor<T> upsample2x(const Tensor<T>& input);

template <class T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out);

/// Channel concatenation in argument order, or (with `split_half`) the
/// selected contiguous half of a single input's channels.
template <class T>
Tensor<T> route(const std::vector<const Tensor<T>*>& inputs,
                std::optional<int> split_half = std::nullopt);

/// Splits the route's output gradient back into one gradient per input.
template <class T>
std::vector<Tensor<T>> route_backward(const std::vector<Shape>& input_shapes,
                                      std::optional<int> split_half,
                                      const Tensor<T>& grad_out);

}  // namespace edgeyolo::nn
