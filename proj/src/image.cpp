#include "edgeyolo/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace edgeyolo {

Image::Image(int w, int h, std::array<std::uint8_t, 3> fill) : width(w), height(h) {
  if (w < 1 || h < 1) {
    throw ImageError("image extent must be positive");
  }
  rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    std::copy(fill.begin(), fill.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
  }
}

namespace {

int header_int(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  long v = -1;
  if (!(in >> v) || v < 1 || v > 65535) {
    throw ImageError("bad PPM header");
  }
  return static_cast<int>(v);
}

}  // namespace

Image read_ppm(std::istream& in) {
  char magic[2] = {};
  if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '6') {
    throw ImageError("not a binary PPM (P6)");
  }
  const int w = header_int(in);
  const int h = header_int(in);
  const int maxval = header_int(in);
  if (maxval > 255) {
    throw ImageError("16-bit PPM is not supported");
  }
  if (!std::isspace(in.get())) {
    throw ImageError("bad PPM header");
  }
  Image img(w, h);
  if (!in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()))) {
    throw ImageError("PPM pixel data truncated");
  }
  if (maxval != 255) {
    for (auto& v : img.rgb) {
      v = static_cast<std::uint8_t>(std::lround(std::min<int>(v, maxval) * 255.0 / maxval));
    }
  }
  return img;
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ImageError("cannot open " + path.string());
  }
  try {
    return read_ppm(in);
  } catch (const ImageError& e) {
    throw ImageError(path.string() + ": " + e.what());
  }
}

void write_ppm(const Image& img, std::ostream& out) {
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  write_ppm(img, out);
  if (!out) {
    throw ImageError("cannot write " + path.string());
  }
}

Tensor<float> to_tensor(const Image& img) {
  Tensor<float> t(Shape{1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        t.at(0, c, y, x) = static_cast<float>(p[c]) / 255.0f;
      }
    }
  }
  return t;
}

Image from_tensor(const Tensor<float>& t) {
  if (t.shape().c != 3) {
    throw ImageError("expected a 3-channel tensor, got " + t.shape().str());
  }
  Image img(t.shape().w, t.shape().h);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      std::uint8_t* p = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        p[c] = static_cast<std::uint8_t>(std::lround(std::clamp(t.at(0, c, y, x), 0.0f, 1.0f) * 255.0f));
      }
    }
  }
  return img;
}

post::Box Letterbox::to_source(const post::Box& b) const {
  return {(b.cx - pad_x) / scale_x, (b.cy - pad_y) / scale_y, b.w / scale_x, b.h / scale_y};
}

post::Box Letterbox::to_input(const post::Box& b) const {
  return {b.cx * scale_x + pad_x, b.cy * scale_y + pad_y, b.w * scale_x, b.h * scale_y};
}

Letterbox letterbox_geometry(int src_w, int src_h, int size) {
  if (src_w < 1 || src_h < 1 || size < 1) {
    throw ImageError("letterbox extents must be positive");
  }
  const double s = std::min(static_cast<double>(size) / src_w, static_cast<double>(size) / src_h);
  const int new_w = std::clamp(static_cast<int>(std::lround(src_w * s)), 1, size);
  const int new_h = std::clamp(static_cast<int>(std::lround(src_h * s)), 1, size);
  Letterbox g;
  g.src_w = src_w;
  g.src_h = src_h;
  g.size = size;
  g.scale_x = static_cast<double>(new_w) / src_w;
  g.scale_y = static_cast<double>(new_h) / src_h;
  g.pad_x = (size - new_w) / 2;
  g.pad_y = (size - new_h) / 2;
  return g;
}

Tensor<float> letterbox(const Image& img, int size, Letterbox* geom) {
  const Letterbox g = letterbox_geometry(img.width, img.height, size);
  if (geom) {
    *geom = g;
  }
  Tensor<float> t(Shape{1, 3, size, size}, 0.5f);
  const int x0 = static_cast<int>(g.pad_x);
  const int y0 = static_cast<int>(g.pad_y);
  const int new_w = static_cast<int>(std::lround(g.scale_x * img.width));
  const int new_h = static_cast<int>(std::lround(g.scale_y * img.height));
  // Pixel centers map through u + 0.5 = (x + 0.5) * scale.
  for (int v = 0; v < new_h; ++v) {
    const double sy = std::clamp((v + 0.5) / g.scale_y - 0.5, 0.0, img.height - 1.0);
    const int ya = static_cast<int>(sy);
    const int yb = std::min(ya + 1, img.height - 1);
    const double fy = sy - ya;
    for (int u = 0; u < new_w; ++u) {
      const double sx = std::clamp((u + 0.5) / g.scale_x - 0.5, 0.0, img.width - 1.0);
      const int xa = static_cast<int>(sx);
      const int xb = std::min(xa + 1, img.width - 1);
      const double fx = sx - xa;
      for (int c = 0; c < 3; ++c) {
        const double top = img.pixel(xa, ya)[c] * (1 - fx) + img.pixel(xb, ya)[c] * fx;
        const double bot = img.pixel(xa, yb)[c] * (1 - fx) + img.pixel(xb, yb)[c] * fx;
        t.at(0, c, y0 + v, x0 + u) = static_cast<float>((top * (1 - fy) + bot * fy) / 255.0);
      }
    }
  }
  return t;
}

void draw_box(Image& img, const post::Box& b, std::array<std::uint8_t, 3> color, int thickness) {
  if (!(b.w > 0 && b.h > 0) || thickness < 1) {
    return;
  }
  const int x1 = static_cast<int>(std::floor(b.x1()));
  const int y1 = static_cast<int>(std::floor(b.y1()));
  const int x2 = static_cast<int>(std::ceil(b.x2())) - 1;
  const int y2 = static_cast<int>(std::ceil(b.y2())) - 1;
  const auto put = [&](int x, int y) {
    if (x >= 0 && y >= 0 && x < img.width && y < img.height) {
      std::copy(color.begin(), color.end(), img.pixel(x, y));
    }
  };
  for (int t = 0; t < thickness; ++t) {
    for (int x = std::max(x1, 0); x <= std::min(x2, img.width - 1); ++x) {
      put(x, y1 + t);
      put(x, y2 - t);
    }
    for (int y = std::max(y1, 0); y <= std::min(y2, img.height - 1); ++y) {
      put(x1 + t, y);
      put(x2 - t, y);
    }
  }
}

std::array<std::uint8_t, 3> class_color(int class_id) {
  // Golden-angle hue steps give well separated colors for nearby ids.
  const double hue = std::fmod(class_id * 137.508, 360.0) / 60.0;
  const double f = hue - std::floor(hue);
  const auto ch = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255)); };
  switch (static_cast<int>(hue) % 6) {
    case 0: return {ch(1), ch(f), 0};
    case 1: return {ch(1 - f), ch(1), 0};
    case 2: return {0, ch(1), ch(f)};
    case 3: return {0, ch(1 - f), ch(1)};
    case 4: return {ch(f), 0, ch(1)};
    default: return {ch(1), 0, ch(1 - f)};
  }
}

}  // namespace edgeyolo
