#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace vinlab {

struct Shape3 {
  int height = 0;
  int width = 0;
  int channels = 0;

  bool operator==(const Shape3&) const = default;
  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
};

// Dense height x width x channels array (channels fastest) with a paired
// gradient buffer of the same shape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int height, int width, int channels) { reshape({height, width, channels}); }
  explicit Tensor(Shape3 shape) { reshape(shape); }

  void reshape(Shape3 shape) {
    shape_ = shape;
    value_.assign(shape.size(), 0.0);
    grad_.assign(shape.size(), 0.0);
  }

  const Shape3& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return value_.size(); }

  std::size_t index(int h, int w, int c) const {
    return (static_cast<std::size_t>(h) * shape_.width + w) * shape_.channels + c;
  }

  double& at(int h, int w, int c) { return value_[index(h, w, c)]; }
  double at(int h, int w, int c) const { return value_[index(h, w, c)]; }
  double& grad_at(int h, int w, int c) { return grad_[index(h, w, c)]; }
  double grad_at(int h, int w, int c) const { return grad_[index(h, w, c)]; }

  std::span<double> values() { return value_; }
  std::span<const double> values() const { return value_; }
  std::span<double> grads() { return grad_; }
  std::span<const double> grads() const { return grad_; }

  void fill(double v);
  void zero_grad();
  bool all_finite() const;

 private:
  Shape3 shape_{};
  std::vector<double> value_;
  std::vector<double> grad_;
};

}  // namespace vinlab
