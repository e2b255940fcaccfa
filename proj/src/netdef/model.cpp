#include "edgeyolo/netdef/model.hpp"

#include <cmath>

#include "edgeyolo/rng.hpp"
#include "edgeyolo/simd/kernels.hpp"

namespace edgeyolo::netdef {

template <class T>
Model<T>::Model(Graph g) : graph_(std::move(g)) {
  params_.resize(graph_.layers.size());
  for (const LayerSpec& l : graph_.layers) {
    if (!l.has_params()) {
      continue;
    }
    const int cin = graph_.input_shape_of(l.index).c;
    LayerParams<T>& p = params_[l.index];
    p.conv = nn::ConvParams<T>::zeros(cin, l.size, l.stride, l.filters);
    if (l.batch_norm) {
      p.bn = nn::BatchNormParams<T>::identity(l.filters);
    }
  }
}

template <class T>
void Model<T>::init_zero() {
  for (auto& p : params_) {
    p.conv.weights.fill(T{});
    std::fill(p.conv.bias.begin(), p.conv.bias.end(), T{});
    if (p.bn) {
      *p.bn = nn::BatchNormParams<T>::identity(static_cast<int>(p.bn->channels()));
    }
  }
  weighted_ = true;
}

template <class T>
void Model<T>::init_random(std::uint64_t seed) {
  Rng rng(seed);
  for (const LayerSpec& l : graph_.layers) {
    if (!l.has_params()) {
      continue;
    }
    LayerParams<T>& p = params_[l.index];
    const double fan_in =
        static_cast<double>(p.conv.in_channels()) * l.size * l.size;
    // Linear head convs start small so initial predictions sit near the
    // anchor priors.
    const double std = l.batch_norm ? std::sqrt(2.0 / fan_in) : 0.01;
    for (T& w : p.conv.weights.values()) {
      w = static_cast<T>(rng.normal() * std);
    }
    std::fill(p.conv.bias.begin(), p.conv.bias.end(), T{});
    if (p.bn) {
      *p.bn = nn::BatchNormParams<T>::identity(l.filters);
    }
  }
  weighted_ = true;
}

template <class T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const LayerSpec& l : graph_.layers) {
    if (!l.has_params()) {
      continue;
    }
    const LayerParams<T>& p = params_[l.index];
    n += p.conv.weights.size() + p.conv.bias.size();
    if (p.bn) {
      n += 4 * p.bn->channels();
    }
  }
  return n;
}

template <class T>
void Model<T>::check_input(const Tensor<T>& input) const {
  if (!weighted_) {
    throw std::logic_error("forward called on an unweighted graph");
  }
  const Shape s = input.shape();
  const Shape want = graph_.input_shape(s.n);
  if (s != want) {
    throw ShapeError("network input " + s.str() + " does not match graph input " +
                     want.str());
  }
}

namespace {

template <class T>
void add_into(std::optional<Tensor<T>>& acc, Tensor<T> g) {
  if (!acc) {
    acc = std::move(g);
  } else {
    T* dst = acc->data();
    const T* src = g.data();
    for (std::size_t i = 0; i < acc->size(); ++i) {
      dst[i] += src[i];
    }
  }
}

template <class T>
std::vector<const Tensor<T>*> gather(const std::vector<Tensor<T>>& outs,
                                     const std::vector<int>& refs) {
  std::vector<const Tensor<T>*> v;
  v.reserve(refs.size());
  for (int r : refs) {
    v.push_back(&outs[r]);
  }
  return v;
}

}  // namespace

template <class T>
std::vector<HeadOutput<T>> Model<T>::forward(const Tensor<T>& input) const {
  check_input(input);
  const auto& layers = graph_.layers;
  std::vector<Tensor<T>> outs(layers.size());
  std::vector<HeadOutput<T>> heads;
  for (const LayerSpec& l : layers) {
    const Tensor<T>& in = l.index == 0 ? input : outs[l.index - 1];
    try {
      switch (l.kind) {
        case LayerKind::Conv: {
          const LayerParams<T>& p = params_[l.index];
          Tensor<T> y = nn::conv2d(in, p.conv);
          if (p.bn) {
            y = nn::batch_norm(y, *p.bn);
          }
          outs[l.index] = l.activation == nn::Activation::Linear
                              ? std::move(y)
                              : nn::activate(y, l.activation);
          break;
        }
        case LayerKind::Max:
          outs[l.index] = nn::max_pool(in, l.size, l.stride);
          break;
        case LayerKind::Route:
          outs[l.index] = nn::route(gather(outs, l.refs), l.split);
          break;
        case LayerKind::Upsample:
          outs[l.index] = nn::upsample2x(in);
          break;
        case LayerKind::Head:
          outs[l.index] = in;
          heads.push_back({l.head_scale, l.index, in});
          break;
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(l.index) + " (" +
                       std::string(kind_name(l.kind)) + "): " + e.what());
    }
  }
  std::stable_sort(heads.begin(), heads.end(),
                   [](const auto& a, const auto& b) { return a.scale_index < b.scale_index; });
  return heads;
}

template <class T>
std::vector<HeadOutput<T>> Model<T>::forward_train(const Tensor<T>& input,
                                                   ForwardCache<T>& cache,
                                                   BnMode mode) const {
  check_input(input);
  const auto& layers = graph_.layers;
  cache.input = input;
  cache.mode = mode;
  cache.outputs.assign(layers.size(), Tensor<T>{});
  cache.conv_out.assign(layers.size(), Tensor<T>{});
  cache.pre_act.assign(layers.size(), Tensor<T>{});
  cache.stats.assign(layers.size(), nn::BatchStats<T>{});
  std::vector<HeadOutput<T>> heads;
  auto& outs = cache.outputs;
  for (const LayerSpec& l : layers) {
    const Tensor<T>& in = l.index == 0 ? cache.input : outs[l.index - 1];
    switch (l.kind) {
      case LayerKind::Conv: {
        const LayerParams<T>& p = params_[l.index];
        cache.conv_out[l.index] = nn::conv2d(in, p.conv);
        if (p.bn) {
          cache.pre_act[l.index] =
              mode == BnMode::Batch
                  ? nn::batch_norm_train(cache.conv_out[l.index], *p.bn,
                                         cache.stats[l.index])
                  : nn::batch_norm(cache.conv_out[l.index], *p.bn);
        } else {
          cache.pre_act[l.index] = cache.conv_out[l.index];
        }
        outs[l.index] = nn::activate(cache.pre_act[l.index], l.activation);
        break;
      }
      case LayerKind::Max:
        outs[l.index] = nn::max_pool(in, l.size, l.stride);
        break;
      case LayerKind::Route:
        outs[l.index] = nn::route(gather(outs, l.refs), l.split);
        break;
      case LayerKind::Upsample:
        outs[l.index] = nn::upsample2x(in);
        break;
      case LayerKind::Head:
        outs[l.index] = in;
        heads.push_back({l.head_scale, l.index, in});
        break;
    }
  }
  std::stable_sort(heads.begin(), heads.end(),
                   [](const auto& a, const auto& b) { return a.scale_index < b.scale_index; });
  return heads;
}

template <class T>
std::vector<LayerGrads<T>> Model<T>::backward(
    const ForwardCache<T>& cache, const std::vector<Tensor<T>>& head_grads) const {
  const auto& layers = graph_.layers;
  std::vector<std::optional<Tensor<T>>> grad(layers.size());
  const std::vector<int> heads = graph_.head_layers();
  if (head_grads.size() != heads.size()) {
    throw std::invalid_argument("expected one gradient per head");
  }
  for (std::size_t k = 0; k < heads.size(); ++k) {
    add_into(grad[heads[k]], head_grads[k]);
  }
  std::vector<LayerGrads<T>> pg(layers.size());
  for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
    if (!grad[i]) {
      continue;
    }
    const LayerSpec& l = layers[i];
    Tensor<T> g = std::move(*grad[i]);
    grad[i].reset();
    const Tensor<T>& in = i == 0 ? cache.input : cache.outputs[i - 1];
    auto to_input = [&](Tensor<T> gi) {
      if (i > 0) {
        add_into(grad[i - 1], std::move(gi));
      }
    };
    switch (l.kind) {
      case LayerKind::Conv: {
        const LayerParams<T>& p = params_[i];
        g = nn::activate_backward(cache.pre_act[i], g, l.activation);
        if (p.bn) {
          g = cache.mode == BnMode::Batch
                  ? nn::batch_norm_train_backward(cache.conv_out[i], *p.bn,
                                                  cache.stats[i], g, pg[i].gamma,
                                                  pg[i].beta)
                  : nn::batch_norm_backward(cache.conv_out[i], *p.bn, g,
                                            pg[i].gamma, pg[i].beta);
        }
        to_input(nn::conv2d_backward(in, p.conv, g, pg[i].weights, pg[i].bias));
        break;
      }
      case LayerKind::Max:
        to_input(nn::max_pool_backward(in, l.size, l.stride, g));
        break;
      case LayerKind::Upsample:
        to_input(nn::upsample2x_backward(g));
        break;
      case LayerKind::Head:
        to_input(std::move(g));
        break;
      case LayerKind::Route: {
        std::vector<Shape> shapes;
        for (int r : l.refs) {
          shapes.push_back(cache.outputs[r].shape());
        }
        auto parts = nn::route_backward(shapes, l.split, g);
        for (std::size_t k = 0; k < l.refs.size(); ++k) {
          add_into(grad[l.refs[k]], std::move(parts[k]));
        }
        break;
      }
    }
  }
  return pg;
}

template <class T>
void Model<T>::apply_sgd(const std::vector<LayerGrads<T>>& grads, T eta) {
  const auto& axpy = simd::kernels<T>().axpy;
  auto step = [&](std::vector<T>& theta, const std::vector<T>& g) {
    if (!g.empty()) {
      axpy(theta.size(), -eta, g.data(), theta.data());
    }
  };
  for (std::size_t i = 0; i < params_.size() && i < grads.size(); ++i) {
    if (!graph_.layers[i].has_params()) {
      continue;
    }
    LayerParams<T>& p = params_[i];
    step(p.conv.weights.values(), grads[i].weights);
    step(p.conv.bias, grads[i].bias);
    if (p.bn) {
      step(p.bn->gamma, grads[i].gamma);
      step(p.bn->beta, grads[i].beta);
    }
  }
}

template <class T>
void Model<T>::update_running_stats(const ForwardCache<T>& cache, T momentum) {
  if (cache.mode != BnMode::Batch) {
    return;
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].bn && i < cache.stats.size() && !cache.stats[i].mean.empty()) {
      nn::update_running_stats(*params_[i].bn, cache.stats[i], momentum);
    }
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace edgeyolo::netdef
