#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "minconv/errors.hpp"
#include "minconv/tensor.hpp"

// Multiplication-free convolution: the signed minimum, clipping and its
// gradient, the per-filter weight rescaling, running input statistics, and the
// min-accumulate forward kernel with an exact-convolution backward.
namespace minconv {

enum class ConvMode { exact, min_approx };
enum class Phase { train, infer };

/// Clip bounds are this multiple of the mean absolute value.
inline constexpr double kClipFactor = 2.0;

/// Signed minimum: sign(a)*sign(b)*min(|a|,|b|) with sign(0) = +1.
template <typename T>
constexpr T smin(T a, T b) {
  using std::abs;
  const T aa = abs(a);
  const T ab = abs(b);
  const T m = ab < aa ? ab : aa;
  return ((a < T{}) != (b < T{})) ? -m : m;
}

/// The trailing scale of the min-accumulate kernel. A separate entry point so
/// the operation audit can tell it apart from accumulation multiplies.
template <typename T>
constexpr T residual_scale(T scale, T value) {
  return scale * value;
}

/// Saturates x to [-alpha, alpha].
template <typename T>
constexpr T clip(T x, T alpha) {
  return x > alpha ? alpha : (x < -alpha ? -alpha : x);
}

/// Pass-through gradient of clip: 1 on [-alpha, alpha], 0 outside.
template <typename T>
constexpr T clip_grad(T x, T alpha) {
  return (x > alpha || x < -alpha) ? T{0} : T{1};
}

/// Mean absolute values tracked by a convolution layer.
struct AbsMeanStats {
  /// mean |w| of every output filter.
  std::vector<double> mu_w;
  /// Exponential moving average of the layer's mean |x|.
  double mu_x_running = 0.0;
  /// Momentum of the moving average.
  double gamma = 0.99;
  /// Number of batches folded into mu_x_running.
  std::uint64_t updates = 0;

  bool operator==(const AbsMeanStats&) const = default;
};

template <typename T>
double mean_abs(std::span<const T> values) {
  double sum = 0.0;
  for (const T& v : values) sum += std::abs(static_cast<double>(v));
  return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

/// mean |w| of every filter of a [Cout, Cin, fh, fw] tensor.
template <typename T>
std::vector<double> filter_abs_means(const Tensor<T>& w) {
  if (w.rank() != 4) throw DimensionError("filters must be [Cout,Cin,fh,fw], got " + to_string(w.shape()));
  std::vector<double> mu(w.dim(0));
  for (std::size_t k = 0; k < mu.size(); ++k) mu[k] = mean_abs<T>(w.slab(k));
  return mu;
}

struct RunningUpdate {
  AbsMeanStats stats;
  /// mean |x| of the batch itself; this is what the current forward pass uses.
  double batch_mean = 0.0;
};

/// mu_x_running <- gamma * mu_x_running + (1 - gamma) * mean(|batch_x|).
template <typename T>
RunningUpdate update_running_mu(const AbsMeanStats& stats, const Tensor<T>& batch_x) {
  if (batch_x.empty()) throw DegenerateInputError("update_running_mu: empty batch");
  RunningUpdate r{stats, mean_abs<T>(batch_x.values())};
  r.stats.mu_x_running = stats.gamma * stats.mu_x_running + (1.0 - stats.gamma) * r.batch_mean;
  ++r.stats.updates;
  return r;
}

template <typename T>
Tensor<T> clip_tensor(const Tensor<T>& x, double alpha) {
  Tensor<T> out = x;
  const T a = static_cast<T>(alpha);
  for (T& v : out.values()) v = clip(v, a);
  return out;
}

/// Clips filter k to [-2*mu_w[k], 2*mu_w[k]].
template <typename T>
Tensor<T> clip_filters(const Tensor<T>& w, std::span<const double> mu_w) {
  if (w.rank() != 4 || mu_w.size() != w.dim(0)) throw DimensionError("clip_filters: one statistic per filter required");
  Tensor<T> out = w;
  for (std::size_t k = 0; k < mu_w.size(); ++k) {
    const T a = static_cast<T>(kClipFactor * mu_w[k]);
    for (T& v : out.slab(k)) v = clip(v, a);
  }
  return out;
}

/// w~ = (mu_x / mu_w[k]) * w for every element of filter k.
template <typename T>
Tensor<T> rescale_weights(const Tensor<T>& w_clipped, std::span<const double> mu_w, double mu_x) {
  if (w_clipped.rank() != 4 || mu_w.size() != w_clipped.dim(0)) {
    throw DimensionError("rescale_weights: one statistic per filter required");
  }
  if (!(mu_x > 0.0)) throw ZeroStatisticsError("rescale_weights: mean |x| is zero");
  Tensor<T> out = w_clipped;
  for (std::size_t k = 0; k < mu_w.size(); ++k) {
    if (!(mu_w[k] > 0.0)) throw ZeroFilterError("rescale_weights: filter " + std::to_string(k) + " is all zero");
    const T ratio = static_cast<T>(mu_x / mu_w[k]);
    for (T& v : out.slab(k)) v = ratio * v;
  }
  return out;
}

namespace detail {

inline constexpr std::size_t kFilterBlock = 32;

/// acc[k] = sum_j smin(row[j], w[j*stride + k]) for k < n <= B.
template <std::size_t B, typename T>
void smin_block(const T* row, std::size_t K, const T* w, std::size_t stride, std::size_t n, T* acc) {
  for (std::size_t k = 0; k < n; ++k) acc[k] = T{};
  for (std::size_t j = 0; j < K; ++j) {
    const T* wr = w + j * stride;
    for (std::size_t k = 0; k < n; ++k) acc[k] += smin(row[j], wr[k]);
  }
}

/// IEEE fast path: smin(x, w) == sign(x) * clip(w, |x|), a clamp followed by
/// a sign-bit flip. Only the sign of zero results can differ from smin().
template <std::size_t B, std::floating_point T>
  requires(sizeof(T) == 4 || sizeof(T) == 8)
void smin_block(const T* row, std::size_t K, const T* w, std::size_t stride, std::size_t n, T* acc) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits kSign = Bits{1} << (8 * sizeof(T) - 1);
  if (n != B) {
    for (std::size_t k = 0; k < n; ++k) acc[k] = T{};
    for (std::size_t j = 0; j < K; ++j) {
      const Bits sign = std::bit_cast<Bits>(row[j]) & kSign;
      const T ax = std::bit_cast<T>(std::bit_cast<Bits>(row[j]) & ~kSign);
      const T* wr = w + j * stride;
      for (std::size_t k = 0; k < n; ++k) {
        const T c = std::min(std::max(wr[k], -ax), ax);
        acc[k] += std::bit_cast<T>(std::bit_cast<Bits>(c) ^ sign);
      }
    }
    return;
  }
  T a[B] = {};
  for (std::size_t j = 0; j < K; ++j) {
    const Bits sign = std::bit_cast<Bits>(row[j]) & kSign;
    const T ax = std::bit_cast<T>(std::bit_cast<Bits>(row[j]) & ~kSign);
    const T* wr = w + j * stride;
    for (std::size_t k = 0; k < B; ++k) {
      const T c = std::min(std::max(wr[k], -ax), ax);
      a[k] += std::bit_cast<T>(std::bit_cast<Bits>(c) ^ sign);
    }
  }
  for (std::size_t k = 0; k < B; ++k) acc[k] = a[k];
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, out_h, out_w;
  std::size_t patch() const { return in_c * fh * fw; }
  std::size_t pixels() const { return out_h * out_w; }
  std::size_t fh, fw;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, const Shape2D& s) {
  s.validate();
  if (x.rank() != 4) throw DimensionError("conv input must be [N,C,H,W], got " + to_string(x.shape()));
  if (w.rank() != 4) throw DimensionError("conv filters must be [Cout,Cin,fh,fw], got " + to_string(w.shape()));
  if (w.dim(1) != x.dim(1) || w.dim(2) != s.fh || w.dim(3) != s.fw) {
    throw DimensionError("conv filters " + to_string(w.shape()) + " do not match input " + to_string(x.shape()));
  }
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), s.out_h(x.dim(2)), s.out_w(x.dim(3)), s.fh, s.fw};
}

}  // namespace detail

/// Exact convolution through im2col and a matrix product.
/// x: [N,Cin,H,W], w: [Cout,Cin,fh,fw] -> [N,Cout,outH,outW].
template <typename T>
Tensor<T> exact_conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Shape2D& s) {
  const auto g = detail::conv_geometry(x, w, s);
  Tensor<T> y({g.batch, g.out_c, g.out_h, g.out_w});
  std::vector<T> cols(g.pixels() * g.patch());
  const ImageDims dims{g.in_c, g.in_h, g.in_w};
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col<T>(x.slab(n), dims, s, cols);
    // y_n[Cout x P] = W[Cout x K] * cols^T
    gemm(false, true, g.out_c, g.pixels(), g.patch(), std::span<const T>(w.values()),
         std::span<const T>(cols), y.slab(n), false);
  }
  return y;
}

/// Min-accumulate convolution: y[k,p] = mu_w[k] * sum_j smin(cols[p,j], w~[k,j]).
/// The input must already be clipped (training) and w~ rescaled from clipped
/// weights. The only multiply per output element is the trailing mu_w[k] scale.
template <typename T>
Tensor<T> approx_conv_forward(const Tensor<T>& x, const Tensor<T>& w_tilde, std::span<const double> mu_w,
                              const Shape2D& s) {
  const auto g = detail::conv_geometry(x, w_tilde, s);
  if (mu_w.size() != g.out_c) throw DimensionError("approx_conv_forward: one mu_w per filter required");
  const std::size_t K = g.patch();
  const std::size_t C = g.out_c;

  // Filter-major -> patch-major so the innermost loop runs over filters.
  std::vector<T> wt(K * C);
  for (std::size_t k = 0; k < C; ++k) {
    for (std::size_t j = 0; j < K; ++j) wt[j * C + k] = w_tilde[k * K + j];
  }
  std::vector<T> scale(C);
  for (std::size_t k = 0; k < C; ++k) scale[k] = static_cast<T>(mu_w[k]);

  Tensor<T> y({g.batch, g.out_c, g.out_h, g.out_w});
  std::vector<T> cols(g.pixels() * K);
  const ImageDims dims{g.in_c, g.in_h, g.in_w};
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col<T>(x.slab(n), dims, s, cols);
    auto out = y.slab(n);
    for (std::size_t p = 0; p < g.pixels(); ++p) {
      const T* row = cols.data() + p * K;
      // Filters in fixed-width blocks so the accumulators stay in registers.
      for (std::size_t k0 = 0; k0 < C; k0 += detail::kFilterBlock) {
        T acc[detail::kFilterBlock];
        const std::size_t width = std::min(detail::kFilterBlock, C - k0);
        detail::smin_block<detail::kFilterBlock>(row, K, wt.data() + k0, C, width, acc);
        for (std::size_t k = 0; k < width; ++k) {
          out[(k0 + k) * g.pixels() + p] = residual_scale(scale[k0 + k], acc[k]);
        }
      }
    }
  }
  return y;
}

template <typename T>
struct ConvGradients {
  Tensor<T> grad_x;
  Tensor<T> grad_w;
};

/// Gradients of the exact convolution of x by w, whatever forward produced
/// grad_out.
template <typename T>
ConvGradients<T> exact_conv_backward(const Tensor<T>& grad_out, const Tensor<T>& x, const Tensor<T>& w,
                                     const Shape2D& s, bool need_grad_x = true) {
  const auto g = detail::conv_geometry(x, w, s);
  if (grad_out.shape() != Extents{g.batch, g.out_c, g.out_h, g.out_w}) {
    throw DimensionError("exact_conv_backward: grad_out " + to_string(grad_out.shape()) + " does not match forward");
  }
  ConvGradients<T> r{need_grad_x ? Tensor<T>(x.shape()) : Tensor<T>(), Tensor<T>(w.shape())};
  std::vector<T> cols(g.pixels() * g.patch());
  std::vector<T> grad_cols(need_grad_x ? cols.size() : 0);
  const ImageDims dims{g.in_c, g.in_h, g.in_w};
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col<T>(x.slab(n), dims, s, cols);
    const std::span<const T> go = grad_out.slab(n);
    // dW[Cout x K] += g_n[Cout x P] * cols[P x K]
    gemm(false, false, g.out_c, g.patch(), g.pixels(), go, std::span<const T>(cols), r.grad_w.values(), true);
    if (!need_grad_x) continue;
    // dcols[P x K] = g_n^T * W
    gemm(true, false, g.pixels(), g.patch(), g.out_c, go, std::span<const T>(w.values()),
         std::span<T>(grad_cols), false);
    col2im<T>(grad_cols, dims, s, r.grad_x.slab(n));
  }
  return r;
}

/// A convolution whose forward pass is either exact or min-approximate.
template <typename T>
struct ApproxConvLayer {
  Tensor<T> weights;  // [Cout, Cin, fh, fw]
  Shape2D shape;
  AbsMeanStats stats;
  ConvMode mode = ConvMode::exact;
  Phase phase = Phase::train;
};

/// Operands of the last forward pass, kept for the backward pass.
template <typename T>
struct ConvForwardCache {
  Tensor<T> x_input;   // layer input before clipping
  Tensor<T> x_used;    // clipped input (approx/train) or the input itself
  Tensor<T> w_used;    // clipped weights (approx) or the weights themselves
  double mu_x = 0.0;   // mean |x| used by this pass
  bool clip_masks = false;
};

/// One forward pass of a convolution layer (bias excluded).
///
/// In min_approx mode during training this performs, in order: the running
/// mean update, input clipping to 2*mu_x (batch statistic), per-filter weight
/// clipping to 2*mu_w[k], rescaling to w~, and the min-accumulate kernel. At
/// inference the frozen running mean replaces the batch mean and inputs are not
/// clipped. Exact mode runs the ordinary convolution but still keeps the
/// statistics current so a checkpoint can seed an approximate network.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, ApproxConvLayer<T>& layer, ConvForwardCache<T>* cache = nullptr) {
  layer.stats.mu_w = filter_abs_means(layer.weights);
  double mu_x = layer.stats.mu_x_running;
  // An untrained layer has no running mean yet; inference uses the batch's.
  if (layer.phase == Phase::infer && layer.stats.updates == 0) mu_x = mean_abs<T>(x.values());
  if (layer.phase == Phase::train) {
    AbsMeanStats seeded = layer.stats;
    // The first batch seeds the moving average instead of decaying from zero.
    if (seeded.updates == 0) seeded.mu_x_running = mean_abs<T>(x.values());
    const RunningUpdate upd = update_running_mu(seeded, x);
    layer.stats = upd.stats;
    mu_x = upd.batch_mean;
  }

  if (layer.mode == ConvMode::exact) {
    Tensor<T> y = exact_conv_forward(x, layer.weights, layer.shape);
    if (cache) *cache = {x, x, layer.weights, mu_x, false};
    return y;
  }

  const bool training = layer.phase == Phase::train;
  Tensor<T> x_used = training ? clip_tensor(x, kClipFactor * mu_x) : x;
  Tensor<T> w_clipped = clip_filters(layer.weights, std::span<const double>(layer.stats.mu_w));
  const Tensor<T> w_tilde = rescale_weights(w_clipped, std::span<const double>(layer.stats.mu_w), mu_x);
  Tensor<T> y = approx_conv_forward(x_used, w_tilde, std::span<const double>(layer.stats.mu_w), layer.shape);
  if (cache) *cache = {x, std::move(x_used), std::move(w_clipped), mu_x, training};
  return y;
}

/// Exact-convolution gradients for the operands of the last forward pass. In
/// min_approx training the clip masks zero the gradient of every input and
/// weight that was saturated.
template <typename T>
ConvGradients<T> conv_backward(const Tensor<T>& grad_out, const ApproxConvLayer<T>& layer,
                               const ConvForwardCache<T>& cache, bool need_grad_x = true) {
  ConvGradients<T> g = exact_conv_backward(grad_out, cache.x_used, cache.w_used, layer.shape, need_grad_x);
  if (!cache.clip_masks) return g;
  const T ax = static_cast<T>(kClipFactor * cache.mu_x);
  for (std::size_t i = 0; i < g.grad_x.size(); ++i) g.grad_x[i] *= clip_grad(cache.x_input[i], ax);
  const std::size_t per_filter = layer.weights.size() / layer.weights.dim(0);
  for (std::size_t i = 0; i < g.grad_w.size(); ++i) {
    const T aw = static_cast<T>(kClipFactor * layer.stats.mu_w[i / per_filter]);
    g.grad_w[i] *= clip_grad(layer.weights[i], aw);
  }
  return g;
}

}  // namespace minconv
