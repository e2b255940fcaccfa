#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace edgeyolo {

/// Prior box extent in pixels at network input resolution.
struct Anchor {
  double w = 0;
  double h = 0;

  double area() const { return w * h; }
  bool operator==(const Anchor&) const = default;
};

/// K priors sorted by area ascending and split evenly over the output
/// scales. Scale index 0 is the coarsest grid (13x13 at 416 input) and gets
/// the largest anchors; the last scale (finest grid) gets the smallest.
struct AnchorSet {
  std::vector<Anchor> anchors;
  int scales = 3;

  AnchorSet() = default;
  AnchorSet(std::vector<Anchor> a, int num_scales);

  std::size_t size() const { return anchors.size(); }
  int per_scale() const;
  std::vector<Anchor> for_scale(int scale_index) const;

  /// Index into `anchors` of anchor `a` of scale `scale_index`.
  int flat_index(int scale_index, int a) const;
};

/// 18 priors for 416x416 input (6 per scale), used when no anchor file is
/// given. Geometric spread between 10x13 and 373x326 pixels.
AnchorSet default_anchors();

/// Text form: one "w h" pair per line, '#' starts a comment.
AnchorSet parse_anchors(std::string_view text, int num_scales = 3);
AnchorSet load_anchors(const std::filesystem::path& path, int num_scales = 3);
std::string format_anchors(const AnchorSet& set);

}  // namespace edgeyolo
