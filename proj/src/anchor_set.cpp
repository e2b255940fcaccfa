#include "edgeyolo/anchor_set.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace edgeyolo {

AnchorSet::AnchorSet(std::vector<Anchor> a, int num_scales)
    : anchors(std::move(a)), scales(num_scales) {
  if (scales < 1 || anchors.size() % static_cast<std::size_t>(scales) != 0) {
    throw std::invalid_argument("anchor count " + std::to_string(anchors.size()) +
                                " is not divisible by " + std::to_string(scales) +
                                " scales");
  }
  std::stable_sort(anchors.begin(), anchors.end(),
                   [](const Anchor& x, const Anchor& y) { return x.area() < y.area(); });
}

int AnchorSet::per_scale() const {
  return scales > 0 ? static_cast<int>(anchors.size()) / scales : 0;
}

int AnchorSet::flat_index(int scale_index, int a) const {
  return (scales - 1 - scale_index) * per_scale() + a;
}

std::vector<Anchor> AnchorSet::for_scale(int scale_index) const {
  if (scale_index < 0 || scale_index >= scales) {
    throw std::out_of_range("anchor scale index " + std::to_string(scale_index));
  }
  const auto first = anchors.begin() + flat_index(scale_index, 0);
  return {first, first + per_scale()};
}

AnchorSet default_anchors() {
  return AnchorSet({{10, 13},   {16, 30},   {23, 22},   {33, 23},   {30, 61},
                    {45, 45},   {62, 45},   {59, 119},  {86, 90},   {116, 90},
                    {100, 180}, {156, 198}, {142, 110}, {200, 150}, {180, 300},
                    {260, 230}, {300, 350}, {373, 326}},
                   3);
}

AnchorSet parse_anchors(std::string_view text, int num_scales) {
  std::vector<Anchor> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Anchor a;
    if (!(ls >> a.w)) {
      continue;
    }
    if (!(ls >> a.h) || a.w <= 0 || a.h <= 0) {
      throw std::runtime_error("anchors line " + std::to_string(lineno) +
                               ": expected two positive numbers");
    }
    out.push_back(a);
  }
  return AnchorSet(std::move(out), num_scales);
}

AnchorSet load_anchors(const std::filesystem::path& path, int num_scales) {
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open anchors file " + path.string());
  }
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_anchors(ss.str(), num_scales);
}

std::string format_anchors(const AnchorSet& set) {
  std::string out = "# " + std::to_string(set.size()) + " anchors (w h, pixels), " +
                    std::to_string(set.per_scale()) + " per scale, area ascending\n";
  char buf[64];
  for (const Anchor& a : set.anchors) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", a.w, a.h);
    out += buf;
  }
  return out;
}

}  // namespace edgeyolo
