#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "minconv/nn.hpp"
#include "minconv/op_audit.hpp"

namespace minconv::cli {

struct ConvOpReport {
  std::size_t layer = 0;     // index in the layer list
  ConvMode mode = ConvMode::exact;
  std::size_t out_h = 0, out_w = 0, out_c = 0;
  std::size_t fh = 0, fw = 0, in_c = 0;
  audit::OpCounts counts;    // measured on the conv accumulation only

  /// outH*outW*Cout*fh*fw*Cin: multiplies of an exact convolution.
  std::uint64_t exact_multiplies() const;
  /// outH*outW*Cout: one residual scale per output element.
  std::uint64_t output_elements() const;
};

/// Runs one image through every conv layer of `spec` with instrumented scalars
/// and reports the operations inside each conv kernel.
std::vector<ConvOpReport> count_conv_ops(const nn::NetworkSpec& spec, std::uint64_t seed);

void print_mulcount(std::ostream& os, const std::vector<ConvOpReport>& reports);

}  // namespace minconv::cli
