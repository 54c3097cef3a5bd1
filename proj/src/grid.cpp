#include "bpre/grid.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "bpre/error.hpp"

namespace bpre {

Axis Axis::symmetric(double half_width, std::size_t count) {
  if (count < 2 || !(half_width > 0.0)) throw InvalidArgument("symmetric axis needs count >= 2 and half_width > 0");
  return Axis{-half_width, 2.0 * half_width / static_cast<double>(count - 1), count};
}

bool operator==(const Axis& a, const Axis& b) {
  return a.origin == b.origin && a.spacing == b.spacing && a.count == b.count;
}

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)), strides_(axes_.size()) {
  size_ = 1;
  for (std::size_t k = axes_.size(); k-- > 0;) {
    if (axes_[k].count == 0 || !(axes_[k].spacing > 0.0)) {
      throw InvalidArgument("grid axis " + std::to_string(k) + " must have positive spacing and nodes");
    }
    strides_[k] = size_;
    size_ *= axes_[k].count;
  }
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (const auto& a : axes_) v *= a.spacing;
  return v;
}

void Grid::unravel(std::size_t flat, std::span<std::size_t> out) const {
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    out[k] = flat / strides_[k];
    flat %= strides_[k];
  }
}

void Grid::coordinates(std::size_t flat, std::span<double> out) const {
  for (std::size_t k = 0; k < axes_.size(); ++k) {
    out[k] = axes_[k].node(flat / strides_[k]);
    flat %= strides_[k];
  }
}

Grid Grid::power(std::size_t n) const {
  std::vector<Axis> axes;
  axes.reserve(axes_.size() * n);
  for (std::size_t i = 0; i < n; ++i) axes.insert(axes.end(), axes_.begin(), axes_.end());
  return Grid(std::move(axes));
}

double GridField::integral() const {
  return std::accumulate(values.begin(), values.end(), 0.0) * grid.cell_volume();
}

void GridField::check_finite(const char* what) const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(what) + ": non-finite value at node " + std::to_string(i));
    }
  }
}

}  // namespace bpre
