#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "minconv/approx.hpp"
#include "minconv/tensor.hpp"

namespace minconv::nn {

enum class LayerKind { conv, maxpool, leaky_relu, relu, fully_connected, dropout };

std::string_view to_string(LayerKind kind);
std::string_view to_string(ConvMode mode);

/// One entry of a network description. Only the fields of its kind are used.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // conv: same padding, stride 1
  std::size_t out_channels = 0;
  std::size_t fh = 0;
  std::size_t fw = 0;
  ConvMode mode = ConvMode::exact;
  // leaky_relu
  double slope = 0.0;
  // fully_connected
  std::size_t out_dim = 0;
  // dropout
  double rate = 0.0;

  static LayerSpec conv(std::size_t out_channels, std::size_t fh, std::size_t fw, ConvMode mode);
  static LayerSpec maxpool();
  static LayerSpec leaky_relu(double slope = 0.1);
  static LayerSpec relu();
  static LayerSpec fully_connected(std::size_t out_dim);
  static LayerSpec dropout(double rate);

  /// Same-padding geometry of a conv entry.
  Shape2D conv_shape() const;

  bool operator==(const LayerSpec&) const = default;
};

inline constexpr std::size_t kNumClasses = 10;

struct NetworkSpec {
  std::string name;
  ImageDims input;
  std::vector<LayerSpec> layers;

  std::size_t conv_count() const;
  std::vector<ConvMode> conv_modes() const;
  void set_conv_modes(const std::vector<ConvMode>& modes);

  bool operator==(const NetworkSpec&) const;
};

/// Output extents (without the batch axis) after every layer. Throws
/// DimensionError when consecutive layers do not fit or the network does not
/// end in kNumClasses logits.
std::vector<Extents> propagate_shapes(const NetworkSpec& spec);

/// conv 5x5x32 + leaky ReLU, maxpool 2x2, conv 5x5x64 + leaky ReLU,
/// FC 1024 + ReLU, dropout 0.5, FC 10. Expects two conv modes.
NetworkSpec build_lenet(const std::vector<ConvMode>& modes, ImageDims input = {1, 28, 28});

/// Six convs (3x3x32, 1x1x16, 3x3x64, 1x1x32, 3x3x128, 1x1x64) each with leaky
/// ReLU, a maxpool after the first and third, then FC 1024 + ReLU, dropout 0.5,
/// FC 10. Expects six conv modes.
NetworkSpec build_mini_cifar(const std::vector<ConvMode>& modes, ImageDims input = {3, 32, 32});

/// Builds "lenet" or "mini-cifar" by name.
NetworkSpec build_network(std::string_view name, const std::vector<ConvMode>& modes, ImageDims input);
std::size_t conv_count_of(std::string_view name);

/// Mode list grammar: comma-separated `exact|approx`, or `all-exact` /
/// `all-approx`. The list must name exactly `conv_count` layers.
std::vector<ConvMode> parse_mode_list(std::string_view text, std::size_t conv_count);
std::string format_mode_list(const std::vector<ConvMode>& modes);

/// Human-readable description, one layer per line, parseable by
/// parse_network_spec.
std::string describe(const NetworkSpec& spec);
NetworkSpec parse_network_spec(std::string_view text);

/// FNV-1a digest of the architecture with conv modes ignored, so exact and
/// approximate variants of a network share a digest.
std::uint64_t architecture_digest(const NetworkSpec& spec);

}  // namespace minconv::nn
