#include "edgeyolo/netdef/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace edgeyolo::netdef {
namespace {

constexpr char kMagic[4] = {'E', 'Y', 'W', 'T'};

static_assert(std::endian::native == std::endian::little,
              "weights IO assumes a little-endian host");

template <class U>
void put(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

void put_floats(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  out.insert(out.end(), p, p + v.size() * sizeof(float));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <class U>
  bool get(U& v) {
    if (remaining() < sizeof(U)) {
      return false;
    }
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return true;
  }

  void floats(std::vector<float>& v, int layer, const char* what) {
    const std::size_t n = v.size() * sizeof(float);
    if (remaining() < n) {
      throw WeightsError(WeightsError::Code::Truncated,
                         "weights file truncated in layer " + std::to_string(layer) +
                             " (" + what + "): need " + std::to_string(n) +
                             " bytes, " + std::to_string(remaining()) + " left");
    }
    std::memcpy(v.data(), bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t weights_file_size(const Graph& g) {
  std::size_t floats = 0;
  for (const LayerSpec& l : g.layers) {
    if (!l.has_params()) {
      continue;
    }
    const std::size_t cin = static_cast<std::size_t>(g.input_shape_of(l.index).c);
    floats += cin * l.size * l.size * l.filters + l.filters;
    if (l.batch_norm) {
      floats += 4 * static_cast<std::size_t>(l.filters);
    }
  }
  return kWeightsHeaderBytes + floats * sizeof(float);
}

std::vector<std::uint8_t> serialize_weights(const Model<float>& m) {
  const Graph& g = m.graph();
  std::vector<std::uint8_t> out;
  out.reserve(weights_file_size(g));
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint32_t>(out, kWeightsVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.layers.size()));
  put<std::uint64_t>(out, signature(g));
  for (const LayerSpec& l : g.layers) {
    if (!l.has_params()) {
      continue;
    }
    const LayerParams<float>& p = m.params()[l.index];
    if (p.bn) {
      put_floats(out, p.bn->gamma);
      put_floats(out, p.bn->beta);
      put_floats(out, p.bn->running_mean);
      put_floats(out, p.bn->running_var);
    }
    put_floats(out, p.conv.weights.values());
    put_floats(out, p.conv.bias);
  }
  return out;
}

void deserialize_weights(Model<float>& m, std::span<const std::uint8_t> bytes) {
  const Graph& g = m.graph();
  Reader r(bytes);
  char magic[4] = {};
  if (!r.get(magic) || std::memcmp(magic, kMagic, 4) != 0) {
    throw WeightsError(WeightsError::Code::BadMagic, "not a weights file (bad magic)");
  }
  std::uint32_t version = 0, layers = 0;
  std::uint64_t sig = 0;
  if (!r.get(version)) {
    throw WeightsError(WeightsError::Code::Truncated, "weights header truncated");
  }
  if (version != kWeightsVersion) {
    throw WeightsError(WeightsError::Code::VersionMismatch,
                       "weights format version " + std::to_string(version) +
                           ", expected " + std::to_string(kWeightsVersion));
  }
  if (!r.get(layers) || !r.get(sig)) {
    throw WeightsError(WeightsError::Code::Truncated, "weights header truncated");
  }
  if (sig != signature(g) || layers != g.layers.size()) {
    throw WeightsError(WeightsError::Code::SignatureMismatch,
                       "weights were saved for a different graph (signature mismatch)");
  }
  std::vector<LayerParams<float>> staged = m.params();
  for (const LayerSpec& l : g.layers) {
    if (!l.has_params()) {
      continue;
    }
    LayerParams<float>& p = staged[l.index];
    if (p.bn) {
      r.floats(p.bn->gamma, l.index, "bn gamma");
      r.floats(p.bn->beta, l.index, "bn beta");
      r.floats(p.bn->running_mean, l.index, "bn mean");
      r.floats(p.bn->running_var, l.index, "bn var");
    }
    r.floats(p.conv.weights.values(), l.index, "conv weights");
    r.floats(p.conv.bias, l.index, "conv bias");
  }
  if (r.remaining() != 0) {
    throw WeightsError(WeightsError::Code::SignatureMismatch,
                       std::to_string(r.remaining()) +
                           " trailing bytes after the last layer");
  }
  m.params() = std::move(staged);
  m.set_weighted(true);
}

void save_weights(const Model<float>& m, std::ostream& out) {
  const auto bytes = serialize_weights(m);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw WeightsError(WeightsError::Code::Io, "failed writing weights");
  }
}

void load_weights(Model<float>& m, std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  deserialize_weights(m, bytes);
}

void save_weights(const Model<float>& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw WeightsError(WeightsError::Code::Io, "cannot write " + path.string());
  }
  save_weights(m, f);
}

void load_weights(Model<float>& m, const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw WeightsError(WeightsError::Code::Io, "cannot open weights " + path.string());
  }
  load_weights(m, f);
}

}  // namespace edgeyolo::netdef
