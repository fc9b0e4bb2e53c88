#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace audiotex {

/// Extents of a (batch, channels, height, width) tensor.
struct Shape4 {
  std::size_t b = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t count() const { return b * c * h * w; }
  std::size_t plane() const { return h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// 4-axis real array stored contiguously in (B, C, H, W) order, so every
/// (batch, channel) plane is a contiguous H*W block.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0)
      : shape_(shape), data_(shape.count(), fill) {}

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(b, c, h, w)];
  }
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[index(b, c, h, w)];
  }
  std::size_t index(std::size_t b, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return ((b * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  std::span<double> plane(std::size_t b, std::size_t c) {
    return {data_.data() + (b * shape_.c + c) * shape_.plane(), shape_.plane()};
  }
  std::span<const double> plane(std::size_t b, std::size_t c) const {
    return {data_.data() + (b * shape_.c + c) * shape_.plane(), shape_.plane()};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape4 shape_{};
  std::vector<double> data_;
};

}  // namespace audiotex
