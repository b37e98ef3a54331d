#include "minconv/network.hpp"

#include <algorithm>
#include <cmath>

namespace minconv::nn {

namespace {

template <typename T>
void fill_uniform(Tensor<T>& t, double limit, Rng& rng) {
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace

// ---- ConvLayer -------------------------------------------------------------

template <typename T>
ConvLayer<T>::ConvLayer(const LayerSpec& spec, std::size_t in_channels, Rng& init_rng) : spec_(spec) {
  core_.shape = spec.conv_shape();
  core_.weights = Tensor<T>({spec.out_channels, in_channels, spec.fh, spec.fw});
  fill_uniform(core_.weights, std::sqrt(6.0 / static_cast<double>(in_channels * spec.fh * spec.fw)), init_rng);
  core_.mode = spec.mode;
  core_.stats.mu_w = filter_abs_means(core_.weights);
  bias_ = Tensor<T>({spec.out_channels});
  grad_w_ = Tensor<T>(core_.weights.shape());
  grad_b_ = Tensor<T>(bias_.shape());
}

template <typename T>
void ConvLayer<T>::set_mode(ConvMode mode) {
  spec_.mode = mode;
  core_.mode = mode;
}

template <typename T>
Tensor<T> ConvLayer<T>::forward(const Tensor<T>& x, Phase phase, Rng&) {
  core_.phase = phase;
  Tensor<T> y = conv_forward(x, core_, &cache_);
  const std::size_t plane = y.dim(2) * y.dim(3);
  for (std::size_t n = 0; n < y.dim(0); ++n) {
    for (std::size_t c = 0; c < y.dim(1); ++c) {
      T* p = y.data() + (n * y.dim(1) + c) * plane;
      const T b = bias_[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
  return y;
}

template <typename T>
Tensor<T> ConvLayer<T>::backward(const Tensor<T>& grad_out) {
  ConvGradients<T> g = conv_backward(grad_out, core_, cache_, input_grad_);
  grad_w_ = std::move(g.grad_w);
  const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
  std::fill(grad_b_.values().begin(), grad_b_.values().end(), T{});
  for (std::size_t n = 0; n < grad_out.dim(0); ++n) {
    for (std::size_t c = 0; c < grad_out.dim(1); ++c) {
      const T* p = grad_out.data() + (n * grad_out.dim(1) + c) * plane;
      T sum{};
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      grad_b_[c] += sum;
    }
  }
  return std::move(g.grad_x);
}

template <typename T>
std::vector<Param<T>> ConvLayer<T>::params() {
  return {{"conv.weight", &core_.weights, &grad_w_}, {"conv.bias", &bias_, &grad_b_}};
}

// ---- MaxPoolLayer ----------------------------------------------------------

template <typename T>
Tensor<T> MaxPoolLayer<T>::forward(const Tensor<T>& x, Phase, Rng&) {
  if (x.rank() != 4) throw DimensionError("maxpool expects [N,C,H,W], got " + minconv::to_string(x.shape()));
  in_shape_ = x.shape();
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t oh = H / 2, ow = W / 2;
  Tensor<T> y({N, C, oh, ow});
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * H * W;
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j, ++o) {
          std::size_t best = base + (2 * i) * W + 2 * j;
          for (std::size_t di = 0; di < 2; ++di) {
            for (std::size_t dj = 0; dj < 2; ++dj) {
              const std::size_t idx = base + (2 * i + di) * W + (2 * j + dj);
              if (x[idx] > x[best]) best = idx;
            }
          }
          argmax_[o] = best;
          y[o] = x[best];
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPoolLayer<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.size() != argmax_.size()) throw DimensionError("maxpool backward: gradient does not match forward");
  Tensor<T> g(in_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) g[argmax_[o]] += grad_out[o];
  return g;
}

// ---- ReluLayer -------------------------------------------------------------

template <typename T>
Tensor<T> ReluLayer<T>::forward(const Tensor<T>& x, Phase, Rng&) {
  input_ = x;
  Tensor<T> y = x;
  const T slope = static_cast<T>(spec_.slope);
  for (T& v : y.values()) v = v > T{} ? v : slope * v;
  return y;
}

template <typename T>
Tensor<T> ReluLayer<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.size() != input_.size()) throw DimensionError("relu backward: gradient does not match forward");
  Tensor<T> g = grad_out;
  const T slope = static_cast<T>(spec_.slope);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = input_[i] > T{} ? g[i] : slope * g[i];
  return g;
}

// ---- FullyConnectedLayer ---------------------------------------------------

template <typename T>
FullyConnectedLayer<T>::FullyConnectedLayer(const LayerSpec& spec, std::size_t in_dim, Rng& init_rng) : spec_(spec) {
  weights_ = Tensor<T>({spec.out_dim, in_dim});
  fill_uniform(weights_, std::sqrt(6.0 / static_cast<double>(in_dim)), init_rng);
  bias_ = Tensor<T>({spec.out_dim});
  grad_w_ = Tensor<T>(weights_.shape());
  grad_b_ = Tensor<T>(bias_.shape());
}

template <typename T>
Tensor<T> FullyConnectedLayer<T>::forward(const Tensor<T>& x, Phase, Rng&) {
  const std::size_t N = x.dim(0);
  const std::size_t in = x.size() / N;
  if (in != weights_.dim(1)) {
    throw DimensionError("fc expects " + std::to_string(weights_.dim(1)) + " inputs per sample, got " +
                         std::to_string(in));
  }
  in_shape_ = x.shape();
  input_ = x.reshaped({N, in});
  const std::size_t out = weights_.dim(0);
  Tensor<T> y({N, out});
  gemm(false, true, N, out, in, std::span<const T>(input_.values()), std::span<const T>(weights_.values()),
       y.values(), false);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < out; ++o) y.at(n, o) += bias_[o];
  }
  return y;
}

template <typename T>
Tensor<T> FullyConnectedLayer<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t N = input_.dim(0), in = input_.dim(1), out = weights_.dim(0);
  if (grad_out.shape() != Extents{N, out}) throw DimensionError("fc backward: gradient does not match forward");
  gemm(true, false, out, in, N, std::span<const T>(grad_out.values()), std::span<const T>(input_.values()),
       grad_w_.values(), false);
  std::fill(grad_b_.values().begin(), grad_b_.values().end(), T{});
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < out; ++o) grad_b_[o] += grad_out.at(n, o);
  }
  Tensor<T> gx({N, in});
  gemm(false, false, N, in, out, std::span<const T>(grad_out.values()), std::span<const T>(weights_.values()),
       gx.values(), false);
  return gx.reshaped(in_shape_);
}

template <typename T>
std::vector<Param<T>> FullyConnectedLayer<T>::params() {
  return {{"fc.weight", &weights_, &grad_w_}, {"fc.bias", &bias_, &grad_b_}};
}

// ---- DropoutLayer ----------------------------------------------------------

template <typename T>
Tensor<T> DropoutLayer<T>::forward(const Tensor<T>& x, Phase phase, Rng& rng) {
  if (phase == Phase::infer || spec_.rate == 0.0) {
    mask_.assign(x.size(), T{1});
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec_.rate));
  mask_.resize(x.size());
  Tensor<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask_[i] = rng.uniform01() >= spec_.rate ? keep_scale : T{};
    y[i] *= mask_[i];
  }
  return y;
}

template <typename T>
Tensor<T> DropoutLayer<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.size() != mask_.size()) throw DimensionError("dropout backward: gradient does not match forward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask_[i];
  return g;
}

// ---- Network ---------------------------------------------------------------

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), dropout_rng_(derive_seed(seed, 1)) {
  const std::vector<Extents> shapes = propagate_shapes(spec_);
  Rng init_rng(derive_seed(seed, 0));
  Extents in{spec_.input.channels, spec_.input.height, spec_.input.width};
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        layers_.push_back(std::make_unique<ConvLayer<T>>(l, in[0], init_rng));
        break;
      case LayerKind::maxpool:
        layers_.push_back(std::make_unique<MaxPoolLayer<T>>(l));
        break;
      case LayerKind::leaky_relu:
      case LayerKind::relu:
        layers_.push_back(std::make_unique<ReluLayer<T>>(l));
        break;
      case LayerKind::fully_connected:
        layers_.push_back(std::make_unique<FullyConnectedLayer<T>>(l, element_count(in), init_rng));
        break;
      case LayerKind::dropout:
        layers_.push_back(std::make_unique<DropoutLayer<T>>(l));
        break;
    }
    in = shapes[i];
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x, Phase phase, std::vector<Tensor<T>>* trace) {
  const Extents expected{spec_.input.channels, spec_.input.height, spec_.input.width};
  if (x.rank() != 4 || Extents(x.shape().begin() + 1, x.shape().end()) != expected) {
    throw DimensionError("network '" + spec_.name + "' expects [N," + std::to_string(expected[0]) + "," +
                         std::to_string(expected[1]) + "," + std::to_string(expected[2]) + "], got " +
                         minconv::to_string(x.shape()));
  }
  if (trace) trace->clear();
  Tensor<T> cur = x;
  for (auto& layer : layers_) {
    if (trace) trace->push_back(cur);
    cur = layer->forward(cur, phase, dropout_rng_);
  }
  return cur;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_logits) {
  Tensor<T> g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
std::vector<Param<T>> Network<T>::params() {
  std::vector<Param<T>> all;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (Param<T> p : layers_[i]->params()) {
      p.name = std::to_string(i) + "." + p.name;
      all.push_back(p);
    }
  }
  return all;
}

template <typename T>
std::vector<ConvLayer<T>*> Network<T>::conv_layers() {
  std::vector<ConvLayer<T>*> convs;
  for (auto& l : layers_) {
    if (auto* c = dynamic_cast<ConvLayer<T>*>(l.get())) convs.push_back(c);
  }
  return convs;
}

template <typename T>
std::vector<const ConvLayer<T>*> Network<T>::conv_layers() const {
  std::vector<const ConvLayer<T>*> convs;
  for (const auto& l : layers_) {
    if (const auto* c = dynamic_cast<const ConvLayer<T>*>(l.get())) convs.push_back(c);
  }
  return convs;
}

template <typename T>
void Network<T>::set_conv_modes(const std::vector<ConvMode>& modes) {
  spec_.set_conv_modes(modes);
  auto convs = conv_layers();
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i]->set_mode(modes[i]);
}

// ---- loss ------------------------------------------------------------------

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + minconv::to_string(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  std::vector<double> p(K);
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw DimensionError("label out of range");
    double mx = static_cast<double>(logits.at(n, 0));
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(logits.at(n, k)));
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += (p[k] = std::exp(static_cast<double>(logits.at(n, k)) - mx));
    r.loss += std::log(z) - (static_cast<double>(logits.at(n, static_cast<std::size_t>(y))) - mx);
    for (std::size_t k = 0; k < K; ++k) {
      const double target = static_cast<std::size_t>(y) == k ? 1.0 : 0.0;
      r.grad_logits.at(n, k) = static_cast<T>((p[k] / z - target) / static_cast<double>(N));
    }
  }
  r.loss /= static_cast<double>(N);
  return r;
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  std::vector<int> out(logits.dim(0));
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.dim(1); ++k) {
      if (logits.at(n, k) > logits.at(n, best)) best = k;
    }
    out[n] = static_cast<int>(best);
  }
  return out;
}

template class ConvLayer<float>;
template class ConvLayer<double>;
template class MaxPoolLayer<float>;
template class MaxPoolLayer<double>;
template class ReluLayer<float>;
template class ReluLayer<double>;
template class FullyConnectedLayer<float>;
template class FullyConnectedLayer<double>;
template class DropoutLayer<float>;
template class DropoutLayer<double>;
template class Network<float>;
template class Network<double>;
template LossResult<float> softmax_cross_entropy(const Tensor<float>&, const std::vector<int>&);
template LossResult<double> softmax_cross_entropy(const Tensor<double>&, const std::vector<int>&);
template std::vector<int> argmax_rows(const Tensor<float>&);
template std::vector<int> argmax_rows(const Tensor<double>&);

}  // namespace minconv::nn
