#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "edgeyolo/anchor_set.hpp"
#include "edgeyolo/nn/layers.hpp"
#include "edgeyolo/tensor.hpp"

namespace edgeyolo::netdef {

enum class LayerKind { Conv, Max, Route, Upsample, Head };

std::string_view kind_name(LayerKind k);

/// One row of the network description.
struct LayerSpec {
  int index = 0;
  LayerKind kind = LayerKind::Conv;
  int size = 0;
  int stride = 0;
  int filters = 0;
  /// Absolute indices of earlier layers (route only).
  std::vector<int> refs;
  std::optional<int> split;
  nn::Activation activation = nn::Activation::Leaky;
  bool batch_norm = true;
  int head_scale = -1;
  /// Inferred output extent for batch size 1.
  Shape out;
  /// Source line in the config text, 0 when built programmatically.
  int line = 0;

  bool has_params() const { return kind == LayerKind::Conv; }
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(int line, int layer, const std::string& msg);
  int line() const { return line_; }
  int layer() const { return layer_; }

 private:
  int line_;
  int layer_;
};

/// Ordered layer list with inferred shapes. List order is topological;
/// routes only reference earlier layers.
struct Graph {
  int in_w = 416;
  int in_h = 416;
  int in_c = 3;
  int num_classes = 80;
  int anchors_per_scale = 6;
  std::vector<LayerSpec> layers;
  /// Priors used when decoding the heads; empty when not known.
  AnchorSet anchors;

  Shape input_shape(int batch = 1) const { return Shape{batch, in_c, in_h, in_w}; }
  /// Layer indices of the head layers, in ascending scale-index order.
  std::vector<int> head_layers() const;
  /// Indices of the layers feeding layer i (-1 denotes the network input).
  std::vector<int> inputs_of(int i) const;
  Shape input_shape_of(int i) const;
};

/// Parses the text grammar:
///   net <W> <H> <C_in> [classes <C>] [anchors <A>]
///   conv <K>x<K>/<s> <filters> [linear|leaky|relu|mish]
///   max <K>x<K>/<s>
///   route <i> [<j> ...] [split <0|1>]
///   upsample
///   head <scale_index>
/// with '#' comments. Shapes are inferred and validated.
Graph parse_config(std::string_view text);
Graph load_config(const std::filesystem::path& path);

/// Recomputes every layer's output shape; throws ConfigError on failure.
void infer_shapes(Graph& g);

/// Normalized config text (same grammar) used for the graph signature.
std::string canonical_text(const Graph& g);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t signature(const Graph& g);

struct EdgeYoloOptions {
  int input_size = 416;
  /// Divides every hidden filter count (head outputs are unaffected).
  int width_divisor = 1;
};

/// The Edge YOLO detector: CSP backbone with SPP (layers 0-16), the CSP
/// neck (17-34), and three FPN-fused heads at strides 32/16/8.
Graph build_edge_yolo(int num_classes, const AnchorSet& anchors,
                      int anchors_per_scale, EdgeYoloOptions opts = {});

}  // namespace edgeyolo::netdef
