#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dueb {

/// Dense NCHW array of doubles. Used for image batches, logits, variance maps
/// and every intermediate activation of the network.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const {
    return static_cast<std::size_t>(h) * w;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  [[nodiscard]] double at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  /// Contiguous (c, h, w) block of sample `n`.
  std::span<double> sample(int n) {
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
    return {data_.data() + n * stride, stride};
  }
  [[nodiscard]] std::span<const double> sample(int n) const {
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.plane();
    return {data_.data() + n * stride, stride};
  }

  std::vector<double>& data() { return data_; }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }
  double* raw() { return data_.data(); }
  [[nodiscard]] const double* raw() const { return data_.data(); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

/// Per-pixel class map of shape (n, h, w). Values lie in {0..C-1}; the value C
/// (one past the last class) marks an ignored pixel.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int n, int h, int w, std::int32_t fill = 0)
      : n_(n), h_(h), w_(w),
        data_(static_cast<std::size_t>(n) * h * w, fill) {}

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int h() const { return h_; }
  [[nodiscard]] int w() const { return w_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] std::size_t plane() const {
    return static_cast<std::size_t>(h_) * w_;
  }

  [[nodiscard]] std::size_t index(int n, int y, int x) const {
    return (static_cast<std::size_t>(n) * h_ + y) * w_ + x;
  }
  std::int32_t& at(int n, int y, int x) { return data_[index(n, y, x)]; }
  [[nodiscard]] std::int32_t at(int n, int y, int x) const {
    return data_[index(n, y, x)];
  }
  std::int32_t& operator[](std::size_t i) { return data_[i]; }
  [[nodiscard]] std::int32_t operator[](std::size_t i) const { return data_[i]; }

  std::vector<std::int32_t>& data() { return data_; }
  [[nodiscard]] const std::vector<std::int32_t>& data() const { return data_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int n_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<std::int32_t> data_;
};

/// Ignore marker for a problem with `num_classes` classes.
constexpr std::int32_t ignore_label(int num_classes) { return num_classes; }

/// Copies sample `i` of `src` into a batch of one.
Tensor slice(const Tensor& src, int i);
LabelMap slice(const LabelMap& src, int i);

/// Stacks single-sample tensors along the batch axis.
Tensor stack(std::span<const Tensor> items);
LabelMap stack(std::span<const LabelMap> items);

}  // namespace dueb
