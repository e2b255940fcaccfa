#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "edgeyolo/dual.hpp"

namespace edgeyolo::post {

/// Axis-aligned box by center and extent, in pixels.
template <class T>
struct BoxT {
  T cx{};
  T cy{};
  T w{};
  T h{};

  T x1() const { return cx - w / T(2); }
  T y1() const { return cy - h / T(2); }
  T x2() const { return cx + w / T(2); }
  T y2() const { return cy + h / T(2); }
  /// Area from the corner extents, so a box's area matches its
  /// self-intersection bit for bit.
  T area() const { return (x2() - x1()) * (y2() - y1()); }

  bool operator==(const BoxT&) const = default;
};

using Box = BoxT<double>;

namespace detail {

template <class T>
T max0(const T& x) {
  return x > T(0) ? x : T(0);
}

template <class T>
T min_of(const T& a, const T& b) {
  return b < a ? b : a;
}

template <class T>
T max_of(const T& a, const T& b) {
  return b > a ? b : a;
}

template <class T>
T intersection(const BoxT<T>& a, const BoxT<T>& b) {
  const T iw = max0(min_of(a.x2(), b.x2()) - max_of(a.x1(), b.x1()));
  const T ih = max0(min_of(a.y2(), b.y2()) - max_of(a.y1(), b.y1()));
  return iw * ih;
}

/// arctan(w / h) with arctan(x / 0+) = pi/2.
template <class T>
T aspect_angle(const T& w, const T& h) {
  using std::atan;
  if (!(h > T(0))) {
    return T(std::numbers::pi / 2);
  }
  return atan(w / h);
}

}  // namespace detail

/// Intersection over union; 0 when the union is empty.
template <class T>
T iou(const BoxT<T>& a, const BoxT<T>& b) {
  const T inter = detail::intersection(a, b);
  const T uni = a.area() + b.area() - inter;
  if (!(uni > T(0))) {
    return T(0);
  }
  return inter / uni;
}

namespace detail {

/// rho^2 / c^2: squared center distance over the squared diagonal of the
/// smallest enclosing box.
template <class T>
T center_penalty(const BoxT<T>& pred, const BoxT<T>& gt) {
  const T dx = pred.cx - gt.cx;
  const T dy = pred.cy - gt.cy;
  const T rho2 = dx * dx + dy * dy;
  const T cw = max_of(pred.x2(), gt.x2()) - min_of(pred.x1(), gt.x1());
  const T ch = max_of(pred.y2(), gt.y2()) - min_of(pred.y1(), gt.y1());
  const T c2 = cw * cw + ch * ch;
  return c2 > T(0) ? rho2 / c2 : T(0);
}

}  // namespace detail

/// 1 - IoU + rho^2/c^2.
template <class T>
T diou_loss(const BoxT<T>& pred, const BoxT<T>& gt) {
  return T(1) - iou(pred, gt) + detail::center_penalty(pred, gt);
}

/// 1 - IoU + rho^2/c^2 + alpha*v, with rho the center distance, c the
/// diagonal of the enclosing box, v = 4/pi^2 (atan(wg/hg) - atan(w/h))^2 and
/// alpha = v / ((1 - IoU) + v), alpha = 0 when that denominator is 0.
template <class T>
T ciou_loss(const BoxT<T>& pred, const BoxT<T>& gt) {
  const T i = iou(pred, gt);
  const T dist = detail::center_penalty(pred, gt);
  const T da = detail::aspect_angle(gt.w, gt.h) - detail::aspect_angle(pred.w, pred.h);
  const T v = T(4.0 / (std::numbers::pi * std::numbers::pi)) * da * da;
  const T denom = (T(1) - i) + v;
  const T alpha = denom > T(0) ? v / denom : T(0);
  return T(1) - i + dist + alpha * v;
}

}  // namespace edgeyolo::post
