#include "minconv/tensor.hpp"

#include <Eigen/Core>

namespace minconv {

std::string to_string(const Extents& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void Shape2D::validate() const {
  if (fh < 1 || fw < 1) throw DimensionError("filter extents must be >= 1");
  if (stride < 1) throw DimensionError("stride must be >= 1");
}

std::size_t Shape2D::out_h(std::size_t in_h) const {
  const std::size_t padded = in_h + 2 * padding;
  if (padded < fh) throw DimensionError("padded height smaller than filter height");
  return (padded - fh) / stride + 1;
}

std::size_t Shape2D::out_w(std::size_t in_w) const {
  const std::size_t padded = in_w + 2 * padding;
  if (padded < fw) throw DimensionError("padded width smaller than filter width");
  return (padded - fw) / stride + 1;
}

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void eigen_gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate) {
  if (a.size() != m * k || b.size() != k * n || c.size() != m * n) {
    throw DimensionError("gemm: buffer sizes do not match m/n/k");
  }
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMajor<T>> C(c.data(), M, N);
  Eigen::Map<const RowMajor<T>> A(a.data(), trans_a ? K : M, trans_a ? M : K);
  Eigen::Map<const RowMajor<T>> B(b.data(), trans_b ? N : K, trans_b ? K : N);
  if (!accumulate) C.setZero();
  if (trans_a && trans_b) {
    C.noalias() += A.transpose() * B.transpose();
  } else if (trans_a) {
    C.noalias() += A.transpose() * B;
  } else if (trans_b) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() += A * B;
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const float> a, std::span<const float> b, std::span<float> c, bool accumulate) {
  eigen_gemm<float>(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const double> a, std::span<const double> b, std::span<double> c, bool accumulate) {
  eigen_gemm<double>(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

}  // namespace minconv
