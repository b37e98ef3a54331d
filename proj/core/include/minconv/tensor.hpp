#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "minconv/errors.hpp"

namespace minconv {

using Extents = std::vector<std::size_t>;

inline std::size_t element_count(const Extents& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Extents& shape);

/// Dense row-major N-dimensional array. Feature maps are NCHW, filters are
/// [Cout, Cin, fh, fw]. A default-constructed tensor is empty (rank 0, no data).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Extents shape, T fill = T{}) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Extents shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_extents();
    if (data_.size() != element_count(shape_)) {
      throw DimensionError("tensor of shape " + to_string(shape_) + " given " +
                           std::to_string(data_.size()) + " values");
    }
  }

  const Extents& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same values, new extents with the same element count.
  Tensor reshaped(Extents shape) const {
    if (element_count(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  /// Contiguous slice along the leading axis, e.g. one image of a batch.
  std::span<const T> slab(std::size_t index) const {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<const T>(data_).subspan(index * stride, stride);
  }
  std::span<T> slab(std::size_t index) {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<T>(data_).subspan(index * stride, stride);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be >= 1, got " + to_string(shape_));
    }
  }

  Extents shape_;
  std::vector<T> data_;
};

/// Filter geometry: extents, stride and symmetric zero padding.
struct Shape2D {
  std::size_t fh = 1;
  std::size_t fw = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  void validate() const;
  std::size_t out_h(std::size_t in_h) const;
  std::size_t out_w(std::size_t in_w) const;
  bool operator==(const Shape2D&) const = default;
};

/// Spatial extents of a single image.
struct ImageDims {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t size() const { return channels * height * width; }
};

/// Receptive-field gather for one CHW image. `cols` receives out_h*out_w rows of
/// C*fh*fw values, channel-major then row-major, zeros outside the image.
template <typename T>
void im2col(std::span<const T> image, const ImageDims& dims, const Shape2D& s, std::span<T> cols) {
  const std::size_t oh = s.out_h(dims.height);
  const std::size_t ow = s.out_w(dims.width);
  const std::size_t row_len = dims.channels * s.fh * s.fw;
  if (image.size() != dims.size() || cols.size() != oh * ow * row_len) {
    throw DimensionError("im2col: buffer sizes do not match image/filter geometry");
  }
  const auto pad = static_cast<std::ptrdiff_t>(s.padding);
  const auto H = static_cast<std::ptrdiff_t>(dims.height);
  const auto W = static_cast<std::ptrdiff_t>(dims.width);
  std::size_t r = 0;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox, ++r) {
      T* row = cols.data() + r * row_len;
      const auto y0 = static_cast<std::ptrdiff_t>(oy * s.stride) - pad;
      const auto x0 = static_cast<std::ptrdiff_t>(ox * s.stride) - pad;
      for (std::size_t c = 0; c < dims.channels; ++c) {
        const T* plane = image.data() + c * dims.height * dims.width;
        for (std::size_t i = 0; i < s.fh; ++i) {
          const std::ptrdiff_t y = y0 + static_cast<std::ptrdiff_t>(i);
          for (std::size_t j = 0; j < s.fw; ++j) {
            const std::ptrdiff_t x = x0 + static_cast<std::ptrdiff_t>(j);
            *row++ = (y >= 0 && y < H && x >= 0 && x < W) ? plane[y * W + x] : T{};
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-adds every row back onto the image it came from.
template <typename T>
void col2im(std::span<const T> cols, const ImageDims& dims, const Shape2D& s, std::span<T> image) {
  const std::size_t oh = s.out_h(dims.height);
  const std::size_t ow = s.out_w(dims.width);
  const std::size_t row_len = dims.channels * s.fh * s.fw;
  if (image.size() != dims.size() || cols.size() != oh * ow * row_len) {
    throw DimensionError("col2im: buffer sizes do not match image/filter geometry");
  }
  const auto pad = static_cast<std::ptrdiff_t>(s.padding);
  const auto H = static_cast<std::ptrdiff_t>(dims.height);
  const auto W = static_cast<std::ptrdiff_t>(dims.width);
  std::size_t r = 0;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox, ++r) {
      const T* row = cols.data() + r * row_len;
      const auto y0 = static_cast<std::ptrdiff_t>(oy * s.stride) - pad;
      const auto x0 = static_cast<std::ptrdiff_t>(ox * s.stride) - pad;
      for (std::size_t c = 0; c < dims.channels; ++c) {
        T* plane = image.data() + c * dims.height * dims.width;
        for (std::size_t i = 0; i < s.fh; ++i) {
          const std::ptrdiff_t y = y0 + static_cast<std::ptrdiff_t>(i);
          for (std::size_t j = 0; j < s.fw; ++j, ++row) {
            const std::ptrdiff_t x = x0 + static_cast<std::ptrdiff_t>(j);
            if (y >= 0 && y < H && x >= 0 && x < W) plane[y * W + x] += *row;
          }
        }
      }
    }
  }
}

/// unfold(x[C,H,W]) -> [out_h*out_w, C*fh*fw].
template <typename T>
Tensor<T> unfold(const Tensor<T>& x, const Shape2D& s) {
  if (x.rank() != 3) throw DimensionError("unfold expects a [C,H,W] tensor, got " + to_string(x.shape()));
  s.validate();
  const ImageDims dims{x.dim(0), x.dim(1), x.dim(2)};
  Tensor<T> cols({s.out_h(dims.height) * s.out_w(dims.width), dims.channels * s.fh * s.fw});
  im2col<T>(x.values(), dims, s, cols.values());
  return cols;
}

/// C (+)= op(A) * op(B), all row-major. op(A) is m x k, op(B) is k x n.
/// Reference loops for arbitrary scalar types; float and double overloads below
/// dispatch to an optimized GEMM.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate) {
  if (a.size() != m * k || b.size() != k * n || c.size() != m * n) {
    throw DimensionError("gemm: buffer sizes do not match m/n/k");
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T{};
      for (std::size_t t = 0; t < k; ++t) {
        const T& av = trans_a ? a[t * m + i] : a[i * k + t];
        const T& bv = trans_b ? b[j * k + t] : b[t * n + j];
        acc += av * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const float> a, std::span<const float> b, std::span<float> c, bool accumulate);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate);

/// matmul(a[m,k], b[k,n]) -> [m,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor<T> c({a.dim(0), b.dim(1)});
  gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.values(), b.values(), c.values(), false);
  return c;
}

}  // namespace minconv
