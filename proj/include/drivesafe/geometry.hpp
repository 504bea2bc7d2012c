#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

namespace drivesafe {

// Axis-aligned pixel-space box: x grows right, y grows down, min strictly
// below max on both axes, coordinates non-negative.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  bool valid() const {
    return x_min >= 0.0 && y_min >= 0.0 && x_min < x_max && y_min < y_max;
  }

  bool operator==(const BoundingBox&) const = default;
};

inline BoundingBox make_box(double x_min, double y_min, double x_max, double y_max) {
  BoundingBox b{x_min, y_min, x_max, y_max};
  if (!b.valid()) {
    throw std::invalid_argument("degenerate bounding box (" + std::to_string(x_min) + ", " +
                                std::to_string(y_min) + ", " + std::to_string(x_max) + ", " +
                                std::to_string(y_max) + ")");
  }
  return b;
}

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

}  // namespace drivesafe
