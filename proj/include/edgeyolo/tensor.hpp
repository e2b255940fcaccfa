#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace edgeyolo {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NCHW extent of a dense rank-4 tensor.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const;
};

/// Dense row-major rank-4 array (batch, channel, height, width).
///
/// The data vector always holds exactly n*c*h*w elements and every
/// dimension is at least 1.
template <class T>
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, T{}) {}
  explicit Tensor(Shape s, T fill = T{}) : shape_(s) {
    check_dims(s);
    data_.assign(s.size(), fill);
  }
  Tensor(Shape s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
    check_dims(s);
    if (data_.size() != s.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + s.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  std::size_t offset(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const {
    return data_[offset(n, c, y, x)];
  }

  /// Pointer to the (h, w) plane of one (batch, channel) pair.
  T* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  static void check_dims(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
      throw ShapeError("tensor dimensions must be >= 1, got " + s.str());
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

inline std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) +
         "x" + std::to_string(w);
}

}  // namespace edgeyolo
