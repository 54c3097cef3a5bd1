#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bpre {

/// Uniform 1-D node set: origin + i * spacing, i in [0, count).
struct Axis {
  double origin = 0.0;
  double spacing = 1.0;
  std::size_t count = 0;

  double node(std::size_t i) const { return origin + static_cast<double>(i) * spacing; }
  double last() const { return node(count - 1); }

  /// Symmetric axis [-half_width, half_width] with `count` nodes.
  static Axis symmetric(double half_width, std::size_t count);
};

bool operator==(const Axis& a, const Axis& b);

/// Rectangular tensor grid. Row-major: the last axis varies fastest.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<Axis> axes);

  std::size_t rank() const { return axes_.size(); }
  const Axis& axis(std::size_t k) const { return axes_[k]; }
  const std::vector<Axis>& axes() const { return axes_; }
  std::size_t size() const { return size_; }
  std::size_t stride(std::size_t k) const { return strides_[k]; }
  double cell_volume() const;

  /// Multi-index of a flat index, written into `out` (size rank()).
  void unravel(std::size_t flat, std::span<std::size_t> out) const;
  /// Coordinates of a flat index, written into `out` (size rank()).
  void coordinates(std::size_t flat, std::span<double> out) const;

  /// n-fold product of this grid with itself.
  Grid power(std::size_t n) const;

  friend bool operator==(const Grid& a, const Grid& b) { return a.axes_ == b.axes_; }

 private:
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Scalar field sampled on a grid.
struct GridField {
  Grid grid;
  std::vector<double> values;
  double time_label = 0.0;

  GridField() = default;
  GridField(Grid g, double fill = 0.0, double time = 0.0)
      : grid(std::move(g)), values(grid.size(), fill), time_label(time) {}

  /// Riemann sum over nodes: sum(values) * cell volume.
  double integral() const;
  /// Throws NumericError on NaN/inf entries.
  void check_finite(const char* what) const;
};

}  // namespace bpre
