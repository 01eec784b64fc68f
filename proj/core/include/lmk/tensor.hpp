#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lmk {

/// 64-byte aligned storage. Vectorised reductions peel a data-dependent number
/// of leading elements, so buffers with varying alignment sum in varying order.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using AlignedFloats = std::vector<float, AlignedAllocator<float>>;

/// Dense float32 array with a small dynamic shape. Images, feature maps and
/// activations are rank-3 channel-major (C, H, W); convolution weights are
/// rank-4 (out, in, k, k); biases rank-1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : Tensor(std::vector<int>{channels, height, width}, fill) {}

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-3 accessors.
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(shape_[1]) * static_cast<std::size_t>(shape_[2]);
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& at(int c, int r, int col) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + r) * shape_[2] + col];
  }
  float at(int c, int r, int col) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + r) * shape_[2] + col];
  }
  std::span<float> channel(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  void fill(float v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  /// Element-wise this += scale * other. Shapes must match.
  void add_scaled(const Tensor& other, float scale = 1.0f);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<int> shape_;
  AlignedFloats data_;
};

std::string shape_string(const std::vector<int>& shape);

/// Throws DimensionError unless a and b have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Input images are rank-3 tensors (C, H, W) with values nominally in [0, 1].
using Image = Tensor;
/// Dense per-pixel D-vectors, rank-3 (D, H, W).
using FeatureMap = Tensor;

}  // namespace lmk
