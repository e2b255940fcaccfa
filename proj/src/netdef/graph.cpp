#include "edgeyolo/netdef/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace edgeyolo::netdef {

std::string_view kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv:
      return "conv";
    case LayerKind::Max:
      return "max";
    case LayerKind::Route:
      return "route";
    case LayerKind::Upsample:
      return "upsample";
    case LayerKind::Head:
      return "head";
  }
  return "?";
}

ConfigError::ConfigError(int line, int layer, const std::string& msg)
    : std::runtime_error("config line " + std::to_string(line) + ", layer " +
                         std::to_string(layer) + ": " + msg),
      line_(line),
      layer_(layer) {}

std::vector<int> Graph::head_layers() const {
  std::vector<int> heads;
  for (const LayerSpec& l : layers) {
    if (l.kind == LayerKind::Head) {
      heads.push_back(l.index);
    }
  }
  std::stable_sort(heads.begin(), heads.end(), [&](int a, int b) {
    return layers[a].head_scale < layers[b].head_scale;
  });
  return heads;
}

std::vector<int> Graph::inputs_of(int i) const {
  const LayerSpec& l = layers.at(i);
  if (l.kind == LayerKind::Route) {
    return l.refs;
  }
  return {i - 1};
}

Shape Graph::input_shape_of(int i) const {
  const int src = inputs_of(i).front();
  return src < 0 ? input_shape() : layers.at(src).out;
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream in(line);
  std::string t;
  while (in >> t) {
    toks.push_back(t);
  }
  return toks;
}

int to_int(const std::string& s, int line, int layer, std::string_view what) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw ConfigError(line, layer,
                      "expected integer " + std::string(what) + ", got '" + s + "'");
  }
  return v;
}

// "<K>x<K>/<s>"
void parse_window(const std::string& tok, int line, int layer, int& size,
                  int& stride) {
  const auto x = tok.find('x');
  const auto slash = tok.find('/');
  if (x == std::string::npos || slash == std::string::npos || slash < x) {
    throw ConfigError(line, layer, "expected <K>x<K>/<s>, got '" + tok + "'");
  }
  const int k1 = to_int(tok.substr(0, x), line, layer, "kernel");
  const int k2 = to_int(tok.substr(x + 1, slash - x - 1), line, layer, "kernel");
  stride = to_int(tok.substr(slash + 1), line, layer, "stride");
  if (k1 != k2) {
    throw ConfigError(line, layer, "only square kernels are supported");
  }
  if (k1 < 1 || stride < 1) {
    throw ConfigError(line, layer, "kernel and stride must be positive");
  }
  size = k1;
}

LayerSpec parse_layer(const std::vector<std::string>& t, int line, int index) {
  LayerSpec l;
  l.index = index;
  l.line = line;
  const std::string& kw = t[0];
  if (kw == "conv") {
    l.kind = LayerKind::Conv;
    if (t.size() < 3 || t.size() > 4) {
      throw ConfigError(line, index, "usage: conv <K>x<K>/<s> <filters> [activation]");
    }
    parse_window(t[1], line, index, l.size, l.stride);
    if (l.size % 2 == 0) {
      throw ConfigError(line, index, "conv kernel must be odd");
    }
    l.filters = to_int(t[2], line, index, "filter count");
    if (l.filters < 1) {
      throw ConfigError(line, index, "filter count must be >= 1");
    }
    if (t.size() == 4) {
      auto act = nn::parse_activation(t[3]);
      if (!act) {
        throw ConfigError(line, index, "unknown activation '" + t[3] + "'");
      }
      l.activation = *act;
      l.batch_norm = *act != nn::Activation::Linear;
    }
  } else if (kw == "max") {
    l.kind = LayerKind::Max;
    if (t.size() != 2) {
      throw ConfigError(line, index, "usage: max <K>x<K>/<s>");
    }
    parse_window(t[1], line, index, l.size, l.stride);
    l.batch_norm = false;
  } else if (kw == "route") {
    l.kind = LayerKind::Route;
    l.batch_norm = false;
    std::size_t i = 1;
    for (; i < t.size() && t[i] != "split"; ++i) {
      l.refs.push_back(to_int(t[i], line, index, "layer index"));
    }
    if (i < t.size()) {
      if (i + 2 != t.size()) {
        throw ConfigError(line, index, "usage: route <i> split <0|1>");
      }
      l.split = to_int(t[i + 1], line, index, "split half");
      if (*l.split != 0 && *l.split != 1) {
        throw ConfigError(line, index, "split half must be 0 or 1");
      }
    }
    if (l.refs.empty()) {
      throw ConfigError(line, index, "route needs at least one layer index");
    }
  } else if (kw == "upsample") {
    l.kind = LayerKind::Upsample;
    l.batch_norm = false;
    if (t.size() != 1) {
      throw ConfigError(line, index, "upsample takes no arguments");
    }
  } else if (kw == "head") {
    l.kind = LayerKind::Head;
    l.batch_norm = false;
    if (t.size() != 2) {
      throw ConfigError(line, index, "usage: head <scale_index>");
    }
    l.head_scale = to_int(t[1], line, index, "scale index");
  } else {
    throw ConfigError(line, index, "unknown layer kind '" + kw + "'");
  }
  return l;
}

}  // namespace

void infer_shapes(Graph& g) {
  if (g.in_w < 1 || g.in_h < 1 || g.in_c < 1) {
    throw ConfigError(0, -1, "network input dimensions must be positive");
  }
  std::set<int> head_scales;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    LayerSpec& l = g.layers[i];
    const int idx = static_cast<int>(i);
    l.index = idx;
    auto fail = [&](const std::string& msg) { throw ConfigError(l.line, idx, msg); };
    try {
      if (l.kind == LayerKind::Route) {
        for (int r : l.refs) {
          if (r >= idx) {
            fail("route references layer " + std::to_string(r) +
                 ", which is not an earlier layer");
          }
          if (r < 0) {
            fail("route index " + std::to_string(r) + " is negative");
          }
        }
        const Shape first = g.layers[l.refs[0]].out;
        if (l.split) {
          if (l.refs.size() != 1) {
            fail("split route takes exactly one layer");
          }
          if (first.c % 2 != 0) {
            fail("split route over odd channel count " + std::to_string(first.c));
          }
          l.out = Shape{1, first.c / 2, first.h, first.w};
        } else {
          int c = 0;
          for (int r : l.refs) {
            const Shape s = g.layers[r].out;
            if (s.h != first.h || s.w != first.w) {
              fail("route inputs disagree spatially: layer " +
                   std::to_string(l.refs[0]) + " is " + std::to_string(first.h) +
                   "x" + std::to_string(first.w) + ", layer " + std::to_string(r) +
                   " is " + std::to_string(s.h) + "x" + std::to_string(s.w));
            }
            c += s.c;
          }
          l.out = Shape{1, c, first.h, first.w};
        }
        continue;
      }
      const Shape in = idx == 0 ? g.input_shape() : g.layers[i - 1].out;
      switch (l.kind) {
        case LayerKind::Conv:
          l.out = nn::conv_output_shape(in, l.size, l.stride, l.filters);
          break;
        case LayerKind::Max:
          l.out = nn::pool_output_shape(in, l.size, l.stride);
          break;
        case LayerKind::Upsample:
          l.out = Shape{1, in.c, in.h * 2, in.w * 2};
          break;
        case LayerKind::Head: {
          const int per = 5 + g.num_classes;
          if (in.c != g.anchors_per_scale * per) {
            fail("head input has " + std::to_string(in.c) + " channels, expected " +
                 std::to_string(g.anchors_per_scale) + "*(5+" +
                 std::to_string(g.num_classes) + ")=" +
                 std::to_string(g.anchors_per_scale * per));
          }
          if (idx == 0 || g.layers[i - 1].kind != LayerKind::Conv) {
            fail("head must directly follow a conv layer");
          }
          if (l.head_scale < 0 || !head_scales.insert(l.head_scale).second) {
            fail("head scale index " + std::to_string(l.head_scale) +
                 " is negative or repeated");
          }
          l.out = in;
          break;
        }
        case LayerKind::Route:
          break;
      }
    } catch (const ShapeError& e) {
      throw ConfigError(l.line, idx, e.what());
    }
  }
  for (std::size_t s = 0; s < head_scales.size(); ++s) {
    if (!head_scales.count(static_cast<int>(s))) {
      throw ConfigError(0, -1, "head scale indices must be 0..n-1");
    }
  }
  const int heads = static_cast<int>(head_scales.size());
  if (!g.anchors.anchors.empty() && heads > 0) {
    if (static_cast<int>(g.anchors.size()) != heads * g.anchors_per_scale) {
      throw ConfigError(0, -1,
                        "graph has " + std::to_string(heads) + " heads with " +
                            std::to_string(g.anchors_per_scale) +
                            " anchors each but " + std::to_string(g.anchors.size()) +
                            " anchors were given");
    }
    g.anchors.scales = heads;
  }
}

Graph parse_config(std::string_view text) {
  Graph g;
  g.anchors = AnchorSet{};
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) {
      raw.erase(hash);
    }
    const auto toks = tokenize(raw);
    if (toks.empty()) {
      continue;
    }
    const int index = static_cast<int>(g.layers.size());
    if (!have_header) {
      if (toks[0] != "net" || toks.size() < 4) {
        throw ConfigError(lineno, -1, "expected header 'net <W> <H> <C_in>'");
      }
      g.in_w = to_int(toks[1], lineno, -1, "width");
      g.in_h = to_int(toks[2], lineno, -1, "height");
      g.in_c = to_int(toks[3], lineno, -1, "channels");
      for (std::size_t i = 4; i < toks.size(); i += 2) {
        if (i + 1 >= toks.size()) {
          throw ConfigError(lineno, -1, "header option '" + toks[i] + "' needs a value");
        }
        if (toks[i] == "classes") {
          g.num_classes = to_int(toks[i + 1], lineno, -1, "class count");
        } else if (toks[i] == "anchors") {
          g.anchors_per_scale = to_int(toks[i + 1], lineno, -1, "anchor count");
        } else {
          throw ConfigError(lineno, -1, "unknown header option '" + toks[i] + "'");
        }
      }
      if (g.num_classes < 1 || g.anchors_per_scale < 1) {
        throw ConfigError(lineno, -1, "classes and anchors must be >= 1");
      }
      have_header = true;
      continue;
    }
    g.layers.push_back(parse_layer(toks, lineno, index));
  }
  if (!have_header) {
    throw ConfigError(lineno, -1, "missing 'net' header");
  }
  infer_shapes(g);
  return g;
}

Graph load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open config " + path.string());
  }
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_text(const Graph& g) {
  std::ostringstream out;
  out << "net " << g.in_w << ' ' << g.in_h << ' ' << g.in_c << " classes "
      << g.num_classes << " anchors " << g.anchors_per_scale << '\n';
  for (const LayerSpec& l : g.layers) {
    out << kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::Conv:
        out << ' ' << l.size << 'x' << l.size << '/' << l.stride << ' ' << l.filters;
        if (l.activation != nn::Activation::Leaky) {
          out << ' ' << nn::activation_name(l.activation);
        }
        break;
      case LayerKind::Max:
        out << ' ' << l.size << 'x' << l.size << '/' << l.stride;
        break;
      case LayerKind::Route:
        for (int r : l.refs) {
          out << ' ' << r;
        }
        if (l.split) {
          out << " split " << *l.split;
        }
        break;
      case LayerKind::Upsample:
        break;
      case LayerKind::Head:
        out << ' ' << l.head_scale;
        break;
    }
    out << '\n';
  }
  return out.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t signature(const Graph& g) { return fnv1a64(canonical_text(g)); }

namespace {

class GraphBuilder {
 public:
  explicit GraphBuilder(Graph& g, int width_divisor) : g_(g), div_(width_divisor) {}

  int conv(int k, int s, int filters, bool linear = false) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.size = k;
    l.stride = s;
    l.filters = linear ? filters : std::max(1, filters / div_);
    if (linear) {
      l.activation = nn::Activation::Linear;
      l.batch_norm = false;
    }
    return push(l);
  }
  int max(int k, int s) {
    LayerSpec l;
    l.kind = LayerKind::Max;
    l.size = k;
    l.stride = s;
    l.batch_norm = false;
    return push(l);
  }
  int route(std::vector<int> refs, std::optional<int> split = std::nullopt) {
    LayerSpec l;
    l.kind = LayerKind::Route;
    l.refs = std::move(refs);
    l.split = split;
    l.batch_norm = false;
    return push(l);
  }
  int upsample() {
    LayerSpec l;
    l.kind = LayerKind::Upsample;
    l.batch_norm = false;
    return push(l);
  }
  int head(int scale) {
    LayerSpec l;
    l.kind = LayerKind::Head;
    l.head_scale = scale;
    l.batch_norm = false;
    return push(l);
  }

 private:
  int push(LayerSpec l) {
    l.index = static_cast<int>(g_.layers.size());
    g_.layers.push_back(std::move(l));
    return g_.layers.back().index;
  }

  Graph& g_;
  int div_;
};

}  // namespace

Graph build_edge_yolo(int num_classes, const AnchorSet& anchors,
                      int anchors_per_scale, EdgeYoloOptions opts) {
  if (anchors.size() % 3 != 0) {
    throw std::invalid_argument("Edge YOLO needs an anchor count divisible by 3, got " +
                                std::to_string(anchors.size()));
  }
  if (static_cast<int>(anchors.size()) != 3 * anchors_per_scale) {
    throw std::invalid_argument("expected " + std::to_string(3 * anchors_per_scale) +
                                " anchors, got " + std::to_string(anchors.size()));
  }
  if (opts.input_size % 32 != 0 || opts.input_size < 32) {
    throw std::invalid_argument("input size must be a positive multiple of 32");
  }
  if (opts.width_divisor < 1 || 32 % opts.width_divisor != 0) {
    throw std::invalid_argument("width divisor must divide 32");
  }
  Graph g;
  g.in_w = g.in_h = opts.input_size;
  g.in_c = 3;
  g.num_classes = num_classes;
  g.anchors_per_scale = anchors_per_scale;
  g.anchors = AnchorSet(anchors.anchors, 3);
  const int out_ch = anchors_per_scale * (5 + num_classes);

  GraphBuilder b(g, opts.width_divisor);
  // Backbone: two stride-2 stems, one CSP block, SPP.
  b.conv(3, 2, 32);        // 0
  b.conv(3, 2, 64);        // 1
  b.conv(3, 1, 64);        // 2
  b.route({2}, 1);         // 3
  b.conv(3, 1, 32);        // 4
  b.conv(3, 1, 32);        // 5
  b.route({5, 4});         // 6
  b.conv(1, 1, 64);        // 7
  b.route({2, 7});         // 8
  b.max(2, 2);             // 9
  b.conv(1, 1, 128);       // 10
  b.max(5, 1);             // 11
  b.route({10});           // 12
  b.max(9, 1);             // 13
  b.route({10});           // 14
  b.max(13, 1);            // 15
  b.route({15, 13, 11, 10});  // 16
  // Neck: CSP blocks at 52x52 and 26x26.
  b.conv(1, 1, 256);       // 17
  b.conv(3, 1, 128);       // 18
  b.route({18}, 1);        // 19
  b.conv(3, 1, 64);        // 20
  b.conv(3, 1, 64);        // 21
  b.route({21, 20});       // 22
  const int lateral52 = b.conv(1, 1, 128);  // 23
  b.route({18, 23});       // 24
  b.max(2, 2);             // 25
  b.conv(1, 1, 128);       // 26
  b.conv(3, 1, 256);       // 27
  b.route({27}, 1);        // 28
  b.conv(3, 1, 128);       // 29
  b.conv(3, 1, 128);       // 30
  b.route({30, 29});       // 31
  const int lateral26 = b.conv(1, 1, 256);  // 32
  b.route({32, 27});       // 33
  b.max(2, 2);             // 34
  // FPN top-down path with one head per scale.
  const int top = b.conv(1, 1, 256);  // 35
  b.conv(3, 1, 512);
  b.conv(1, 1, out_ch, true);
  b.head(0);
  b.route({top});
  b.conv(1, 1, 128);
  b.upsample();
  const int merge26 = b.route({static_cast<int>(g.layers.size()) - 1, lateral26});
  b.conv(3, 1, 768);
  b.conv(1, 1, out_ch, true);
  b.head(1);
  b.route({merge26});
  b.conv(1, 1, 64);
  b.upsample();
  b.route({static_cast<int>(g.layers.size()) - 1, lateral52});
  b.conv(3, 1, 384);
  b.conv(1, 1, out_ch, true);
  b.head(2);

  infer_shapes(g);
  return g;
}

}  // namespace edgeyolo::netdef
