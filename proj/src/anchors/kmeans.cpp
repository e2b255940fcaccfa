#include "edgeyolo/anchors/kmeans.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "edgeyolo/rng.hpp"

namespace edgeyolo::anchors {

double point_distance(const Anchor& a, const Anchor& b, Metric metric) {
  if (metric == Metric::Euclidean) {
    const double dw = a.w - b.w;
    const double dh = a.h - b.h;
    return dw * dw + dh * dh;
  }
  const double inter = std::min(a.w, b.w) * std::min(a.h, b.h);
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? 1.0 - inter / uni : 0.0;
}

namespace {

struct Nearest {
  int index;
  double dist;
};

Nearest nearest(const Anchor& p, const std::vector<Anchor>& cs, Metric metric) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const double d = point_distance(p, cs[i], metric);
    if (d < best.dist) {
      best = {static_cast<int>(i), d};
    }
  }
  return best;
}

double total(const std::vector<Anchor>& pts, const std::vector<Anchor>& cs, Metric metric) {
  double s = 0.0;
  for (const Anchor& p : pts) {
    s += nearest(p, cs, metric).dist;
  }
  return s;
}

}  // namespace

double distortion(const std::vector<Anchor>& data, const std::vector<Anchor>& centroids,
                  Metric metric, double norm_w, double norm_h) {
  std::vector<Anchor> pts, cs;
  pts.reserve(data.size());
  for (const Anchor& a : data) {
    pts.push_back({a.w / norm_w, a.h / norm_h});
  }
  for (const Anchor& c : centroids) {
    cs.push_back({c.w / norm_w, c.h / norm_h});
  }
  return total(pts, cs, metric);
}

KMeansResult kmeans_anchors(const std::vector<Anchor>& data, const KMeansOptions& opts) {
  const int k = opts.k;
  const std::size_t m = data.size();
  if (k < 1) {
    throw std::invalid_argument("k-means needs k >= 1");
  }
  if (m < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("k-means needs at least k=" + std::to_string(k) +
                                " boxes, got " + std::to_string(m));
  }
  if (opts.max_iter < 1) {
    throw std::invalid_argument("k-means needs max_iter >= 1");
  }
  std::vector<Anchor> pts;
  pts.reserve(m);
  for (const Anchor& a : data) {
    if (!(a.w > 0) || !(a.h > 0)) {
      throw std::invalid_argument("box extents must be positive");
    }
    pts.push_back({a.w / opts.norm_w, a.h / opts.norm_h});
  }

  // k distinct indices: partial Fisher-Yates.
  Rng rng(opts.seed);
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) {
    idx[i] = i;
  }
  std::vector<Anchor> cs(k);
  for (int i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(m - i);
    std::swap(idx[i], idx[j]);
    cs[i] = pts[idx[i]];
  }

  KMeansResult r;
  r.history.push_back(total(pts, cs, opts.metric));
  std::vector<int> assign(m, 0);
  for (int it = 0; it < opts.max_iter; ++it) {
    std::vector<double> dist(m);
    std::vector<int> count(k, 0);
    for (std::size_t j = 0; j < m; ++j) {
      const Nearest n = nearest(pts[j], cs, opts.metric);
      assign[j] = n.index;
      dist[j] = n.dist;
      ++count[n.index];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (count[assign[j]] > 1 && dist[j] > far_d) {
          far_d = dist[j];
          far = j;
        }
      }
      --count[assign[far]];
      assign[far] = c;
      dist[far] = 0.0;
      count[c] = 1;
    }
    std::vector<double> sw(k, 0.0), sh(k, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      sw[assign[j]] += pts[j].w;
      sh[assign[j]] += pts[j].h;
    }
    bool moved = false;
    for (int c = 0; c < k; ++c) {
      const Anchor next{sw[c] / count[c], sh[c] / count[c]};
      if (!(next == cs[c])) {
        moved = true;
        cs[c] = next;
      }
    }
    r.iterations = it + 1;
    r.history.push_back(total(pts, cs, opts.metric));
    if (!moved) {
      r.converged = true;
      break;
    }
  }

  // Sort by area and remap the assignment.
  std::vector<int> order(k);
  for (int i = 0; i < k; ++i) {
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cs[a].area() < cs[b].area(); });
  std::vector<int> rank(k);
  for (int i = 0; i < k; ++i) {
    rank[order[i]] = i;
    r.centroids.push_back({cs[order[i]].w * opts.norm_w, cs[order[i]].h * opts.norm_h});
  }
  r.assignment.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    r.assignment[j] = rank[assign[j]];
  }
  return r;
}

std::vector<Anchor> parse_label_extents(std::string_view csv) {
  std::vector<Anchor> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("image", 0) == 0) {
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      cells.push_back(cell);
    }
    if (cells.size() < 6) {
      throw std::runtime_error("label line " + std::to_string(lineno) +
                               ": expected image,class,cx,cy,w,h");
    }
    try {
      out.push_back({std::stod(cells[4]), std::stod(cells[5])});
    } catch (const std::exception&) {
      throw std::runtime_error("label line " + std::to_string(lineno) + ": bad number");
    }
  }
  return out;
}

std::vector<Anchor> load_label_extents(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open labels " + path.string());
  }
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_label_extents(ss.str());
}

}  // namespace edgeyolo::anchors
