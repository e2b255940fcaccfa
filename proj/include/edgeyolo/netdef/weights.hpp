#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "edgeyolo/netdef/model.hpp"

namespace edgeyolo::netdef {

// Binary layout (little-endian):
//   "EYWT" | u32 version | u32 layer count | u64 graph signature
//   then, per conv layer in order: [gamma beta mean var] (batch-normed
//   layers only), weights, bias, all f32.
inline constexpr std::uint32_t kWeightsVersion = 1;
inline constexpr std::size_t kWeightsHeaderBytes = 20;

class WeightsError : public std::runtime_error {
 public:
  enum class Code { BadMagic, VersionMismatch, SignatureMismatch, Truncated, Io };
  WeightsError(Code code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// Serialized size in bytes of a graph's weights.
std::size_t weights_file_size(const Graph& g);

std::vector<std::uint8_t> serialize_weights(const Model<float>& m);
/// All-or-nothing: on any error `m` is left untouched.
void deserialize_weights(Model<float>& m, std::span<const std::uint8_t> bytes);

void save_weights(const Model<float>& m, std::ostream& out);
void load_weights(Model<float>& m, std::istream& in);
void save_weights(const Model<float>& m, const std::filesystem::path& path);
void load_weights(Model<float>& m, const std::filesystem::path& path);

}  // namespace edgeyolo::netdef
