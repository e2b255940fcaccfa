#pragma once

#include <string>
#include <vector>

#include "edgeyolo/rng.hpp"

namespace testing {

/// Small random but valid config: convs, pools and concat routes ending in
/// one head.
inline std::string random_config(edgeyolo::Rng& rng) {
  const int classes = rng.range(1, 3);
  const int anchors = rng.range(1, 2);
  const int side = 4 * rng.range(1, 3);
  std::string text = "net " + std::to_string(side) + " " + std::to_string(side) +
                     " " + std::to_string(rng.range(1, 3)) + " classes " +
                     std::to_string(classes) + " anchors " + std::to_string(anchors) +
                     "\n";
  const char* acts[] = {"", " linear", " relu", " mish"};
  std::vector<int> sides;  // spatial size after each layer
  int cur = side;
  const int body = rng.range(0, 6);
  for (int i = 0; i < body; ++i) {
    const int pick = static_cast<int>(rng.below(4));
    std::vector<int> same;
    for (int j = 0; j + 1 < static_cast<int>(sides.size()); ++j) {
      if (sides[j] == cur) {
        same.push_back(j);
      }
    }
    if (pick == 0 && cur >= 4) {
      text += "max 2x2/2\n";
      cur /= 2;
    } else if (pick == 1 && !same.empty()) {
      const int other = same[rng.below(same.size())];
      text += "route " + std::to_string(sides.size() - 1) + " " +
              std::to_string(other) + "\n";
    } else {
      const int k = rng.bernoulli(0.5) ? 3 : 1;
      text += "conv " + std::to_string(k) + "x" + std::to_string(k) + "/1 " +
              std::to_string(rng.range(1, 6)) + acts[rng.below(4)] + "\n";
    }
    sides.push_back(cur);
  }
  text += "conv 1x1/1 " + std::to_string(anchors * (5 + classes)) + " linear\n";
  text += "head 0\n";
  return text;
}

}  // namespace testing
