#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "edgeyolo/postprocess/box.hpp"
#include "edgeyolo/tensor.hpp"

namespace edgeyolo {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit RGB raster, interleaved, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool operator==(const Image&) const = default;
};

/// Binary PPM (P6) with maxval <= 255; header comments are skipped.
Image read_ppm(std::istream& in);
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& img, std::ostream& out);
void write_ppm(const Image& img, const std::filesystem::path& path);

/// (1, 3, H, W) tensor with values in [0, 1].
Tensor<float> to_tensor(const Image& img);
/// Inverse of to_tensor for batch 0 (values clamped, rounded to nearest).
Image from_tensor(const Tensor<float>& t);

/// Maps network-input coordinates back to the source image.
struct Letterbox {
  int src_w = 0;
  int src_h = 0;
  int size = 0;
  /// Resized extent over source extent, per axis.
  double scale_x = 1.0;
  double scale_y = 1.0;
  double pad_x = 0.0;
  double pad_y = 0.0;

  post::Box to_source(const post::Box& b) const;
  post::Box to_input(const post::Box& b) const;
};

/// Aspect-preserving bilinear resize into a size x size input; the
/// uncovered border is filled with 0.5 gray. The resized picture is
/// centered (padding split with the odd pixel on the right/bottom).
Letterbox letterbox_geometry(int src_w, int src_h, int size);
Tensor<float> letterbox(const Image& img, int size, Letterbox* geom = nullptr);

/// Rectangle outline of `thickness` pixels, clipped to the image.
void draw_box(Image& img, const post::Box& b, std::array<std::uint8_t, 3> color,
              int thickness = 2);

/// Distinct outline color per class id.
std::array<std::uint8_t, 3> class_color(int class_id);

}  // namespace edgeyolo
