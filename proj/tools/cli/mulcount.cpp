#include "mulcount.hpp"

#include <iomanip>
#include <ostream>

#include "minconv/approx.hpp"
#include "minconv/rng.hpp"

namespace minconv::cli {

std::uint64_t ConvOpReport::exact_multiplies() const { return output_elements() * fh * fw * in_c; }

std::uint64_t ConvOpReport::output_elements() const { return static_cast<std::uint64_t>(out_h) * out_w * out_c; }

std::vector<ConvOpReport> count_conv_ops(const nn::NetworkSpec& spec, std::uint64_t seed) {
  using audit::Counted;
  const auto shapes = nn::propagate_shapes(spec);
  Rng rng(seed);
  std::vector<ConvOpReport> reports;
  Extents in{spec.input.channels, spec.input.height, spec.input.width};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const nn::LayerSpec& l = spec.layers[i];
    if (l.kind == nn::LayerKind::conv) {
      const Shape2D s = l.conv_shape();
      Tensor<Counted> x({1, in[0], in[1], in[2]});
      for (auto& v : x.values()) v = rng.normal(0.0, 1.0);
      Tensor<Counted> w({l.out_channels, in[0], l.fh, l.fw});
      for (auto& v : w.values()) v = rng.normal(0.0, 0.1);

      ConvOpReport r;
      r.layer = i;
      r.mode = l.mode;
      r.out_c = l.out_channels;
      r.out_h = s.out_h(in[1]);
      r.out_w = s.out_w(in[2]);
      r.fh = l.fh;
      r.fw = l.fw;
      r.in_c = in[0];
      if (l.mode == ConvMode::exact) {
        audit::Scope scope(r.counts);
        exact_conv_forward(x, w, s);
      } else {
        // w~ is a per-layer constant at inference, so it is prepared outside
        // the audited region.
        const auto mu_w = filter_abs_means(w);
        const auto w_tilde = rescale_weights(clip_filters(w, mu_w), mu_w, 1.0);
        audit::Scope scope(r.counts);
        approx_conv_forward(x, w_tilde, mu_w, s);
      }
      reports.push_back(r);
    }
    in = shapes[i];
  }
  return reports;
}

void print_mulcount(std::ostream& os, const std::vector<ConvOpReport>& reports) {
  os << "layer,mode,out_h,out_w,out_c,fh,fw,in_c,multiplies,smins,residual_multiplies,additions,"
        "exact_multiplies,reduction_factor\n";
  std::uint64_t mul = 0, smin = 0, res = 0, exact = 0;
  for (const auto& r : reports) {
    const std::uint64_t performed = r.counts.multiplies + r.counts.residual_multiplies;
    os << r.layer << ',' << nn::to_string(r.mode) << ',' << r.out_h << ',' << r.out_w << ',' << r.out_c << ','
       << r.fh << ',' << r.fw << ',' << r.in_c << ',' << r.counts.multiplies << ',' << r.counts.smins << ','
       << r.counts.residual_multiplies << ',' << r.counts.additions << ',' << r.exact_multiplies() << ','
       << std::setprecision(17) << static_cast<double>(r.exact_multiplies()) / static_cast<double>(performed)
       << '\n';
    mul += r.counts.multiplies;
    smin += r.counts.smins;
    res += r.counts.residual_multiplies;
    exact += r.exact_multiplies();
  }
  os << "total,,,,,,,," << mul << ',' << smin << ',' << res << ",," << exact << ",\n";
}

}  // namespace minconv::cli
