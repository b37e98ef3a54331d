#include "minconv/nn.hpp"

#include <iomanip>
#include <sstream>

namespace minconv::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::relu: return "relu";
    case LayerKind::fully_connected: return "fc";
    case LayerKind::dropout: return "dropout";
  }
  return "unknown";
}

std::string_view to_string(ConvMode mode) { return mode == ConvMode::exact ? "exact" : "approx"; }

LayerSpec LayerSpec::conv(std::size_t out_channels, std::size_t fh, std::size_t fw, ConvMode mode) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.out_channels = out_channels;
  s.fh = fh;
  s.fw = fw;
  s.mode = mode;
  return s;
}

LayerSpec LayerSpec::maxpool() {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  return s;
}

LayerSpec LayerSpec::leaky_relu(double slope) {
  LayerSpec s;
  s.kind = LayerKind::leaky_relu;
  s.slope = slope;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::fully_connected(std::size_t out_dim) {
  LayerSpec s;
  s.kind = LayerKind::fully_connected;
  s.out_dim = out_dim;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout rate must lie in [0, 1)");
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  return s;
}

Shape2D LayerSpec::conv_shape() const {
  if (fh % 2 == 0 || fw % 2 == 0) throw DimensionError("same padding needs odd filter extents");
  if (fh != fw) throw DimensionError("same padding needs square filters");
  return Shape2D{fh, fw, 1, fh / 2};
}

std::size_t NetworkSpec::conv_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kind == LayerKind::conv;
  return n;
}

std::vector<ConvMode> NetworkSpec::conv_modes() const {
  std::vector<ConvMode> modes;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::conv) modes.push_back(l.mode);
  }
  return modes;
}

void NetworkSpec::set_conv_modes(const std::vector<ConvMode>& modes) {
  if (modes.size() != conv_count()) {
    throw UsageError("network '" + name + "' has " + std::to_string(conv_count()) + " conv layers, got " +
                     std::to_string(modes.size()) + " modes");
  }
  std::size_t i = 0;
  for (auto& l : layers) {
    if (l.kind == LayerKind::conv) l.mode = modes[i++];
  }
}

bool NetworkSpec::operator==(const NetworkSpec& o) const {
  return name == o.name && input.channels == o.input.channels && input.height == o.input.height &&
         input.width == o.input.width && layers == o.layers;
}

std::vector<Extents> propagate_shapes(const NetworkSpec& spec) {
  std::vector<Extents> out;
  Extents cur{spec.input.channels, spec.input.height, spec.input.width};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.size() != 3) throw DimensionError(where + ": conv after a flat layer");
        if (l.out_channels == 0) throw DimensionError(where + ": conv needs out_channels >= 1");
        const Shape2D s = l.conv_shape();
        cur = {l.out_channels, s.out_h(cur[1]), s.out_w(cur[2])};
        break;
      }
      case LayerKind::maxpool:
        if (cur.size() != 3 || cur[1] < 2 || cur[2] < 2) throw DimensionError(where + ": maxpool needs a >=2x2 map");
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::fully_connected:
        if (l.out_dim == 0) throw DimensionError(where + ": fc needs out_dim >= 1");
        cur = {l.out_dim};
        break;
      case LayerKind::leaky_relu:
      case LayerKind::relu:
      case LayerKind::dropout:
        break;
    }
    out.push_back(cur);
  }
  if (out.empty() || out.back() != Extents{kNumClasses}) {
    throw DimensionError("network '" + spec.name + "' must end with " + std::to_string(kNumClasses) + " logits");
  }
  return out;
}

namespace {

ConvMode mode_at(const std::vector<ConvMode>& modes, std::size_t i, std::size_t expected, std::string_view net) {
  if (modes.size() != expected) {
    throw UsageError(std::string(net) + " has " + std::to_string(expected) + " conv layers, got " +
                     std::to_string(modes.size()) + " modes");
  }
  return modes[i];
}

}  // namespace

NetworkSpec build_lenet(const std::vector<ConvMode>& modes, ImageDims input) {
  NetworkSpec s{"lenet", input, {}};
  s.layers = {
      LayerSpec::conv(32, 5, 5, mode_at(modes, 0, 2, "lenet")),
      LayerSpec::leaky_relu(),
      LayerSpec::maxpool(),
      LayerSpec::conv(64, 5, 5, mode_at(modes, 1, 2, "lenet")),
      LayerSpec::leaky_relu(),
      LayerSpec::fully_connected(1024),
      LayerSpec::relu(),
      LayerSpec::dropout(0.5),
      LayerSpec::fully_connected(kNumClasses),
  };
  propagate_shapes(s);
  return s;
}

NetworkSpec build_mini_cifar(const std::vector<ConvMode>& modes, ImageDims input) {
  NetworkSpec s{"mini-cifar", input, {}};
  auto conv = [&](std::size_t i, std::size_t c, std::size_t f) {
    return LayerSpec::conv(c, f, f, mode_at(modes, i, 6, "mini-cifar"));
  };
  s.layers = {
      conv(0, 32, 3),  LayerSpec::leaky_relu(), LayerSpec::maxpool(),
      conv(1, 16, 1),  LayerSpec::leaky_relu(),
      conv(2, 64, 3),  LayerSpec::leaky_relu(), LayerSpec::maxpool(),
      conv(3, 32, 1),  LayerSpec::leaky_relu(),
      conv(4, 128, 3), LayerSpec::leaky_relu(),
      conv(5, 64, 1),  LayerSpec::leaky_relu(),
      LayerSpec::fully_connected(1024), LayerSpec::relu(),
      LayerSpec::dropout(0.5),
      LayerSpec::fully_connected(kNumClasses),
  };
  propagate_shapes(s);
  return s;
}

std::size_t conv_count_of(std::string_view name) {
  if (name == "lenet") return 2;
  if (name == "mini-cifar" || name == "mini_cifar") return 6;
  throw UsageError("unknown network '" + std::string(name) + "' (expected lenet or mini-cifar)");
}

NetworkSpec build_network(std::string_view name, const std::vector<ConvMode>& modes, ImageDims input) {
  if (name == "lenet") return build_lenet(modes, input);
  if (name == "mini-cifar" || name == "mini_cifar") return build_mini_cifar(modes, input);
  throw UsageError("unknown network '" + std::string(name) + "' (expected lenet or mini-cifar)");
}

std::vector<ConvMode> parse_mode_list(std::string_view text, std::size_t conv_count) {
  if (text == "all-exact") return std::vector<ConvMode>(conv_count, ConvMode::exact);
  if (text == "all-approx") return std::vector<ConvMode>(conv_count, ConvMode::min_approx);
  std::vector<ConvMode> modes;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, end - start);
    if (item == "exact") {
      modes.push_back(ConvMode::exact);
    } else if (item == "approx") {
      modes.push_back(ConvMode::min_approx);
    } else {
      throw UsageError("bad mode '" + std::string(item) + "' (expected exact or approx)");
    }
    start = end + 1;
  }
  if (modes.size() != conv_count) {
    throw UsageError("mode list names " + std::to_string(modes.size()) + " layers, network has " +
                     std::to_string(conv_count) + " conv layers");
  }
  return modes;
}

std::string format_mode_list(const std::vector<ConvMode>& modes) {
  std::string s;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    if (i) s += ",";
    s += to_string(modes[i]);
  }
  return s;
}

std::string describe(const NetworkSpec& spec) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "name " << spec.name << "\n";
  os << "input " << spec.input.channels << " " << spec.input.height << " " << spec.input.width << "\n";
  for (const auto& l : spec.layers) {
    os << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::conv: os << " " << l.out_channels << " " << l.fh << " " << l.fw << " " << to_string(l.mode); break;
      case LayerKind::leaky_relu: os << " " << l.slope; break;
      case LayerKind::fully_connected: os << " " << l.out_dim; break;
      case LayerKind::dropout: os << " " << l.rate; break;
      case LayerKind::maxpool:
      case LayerKind::relu: break;
    }
    os << "\n";
  }
  return os.str();
}

NetworkSpec parse_network_spec(std::string_view text) {
  NetworkSpec spec;
  std::istringstream is{std::string(text)};
  std::string line;
  bool have_input = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word) || word.front() == '#') continue;
    auto fail = [&] { return FormatError("network description: cannot parse '" + line + "'"); };
    if (word == "name") {
      if (!(ls >> spec.name)) throw fail();
    } else if (word == "input") {
      if (!(ls >> spec.input.channels >> spec.input.height >> spec.input.width)) throw fail();
      have_input = true;
    } else if (word == "conv") {
      std::size_t c, fh, fw;
      std::string mode;
      if (!(ls >> c >> fh >> fw >> mode)) throw fail();
      spec.layers.push_back(LayerSpec::conv(c, fh, fw, parse_mode_list(mode, 1).front()));
    } else if (word == "maxpool") {
      spec.layers.push_back(LayerSpec::maxpool());
    } else if (word == "leaky_relu") {
      double slope;
      if (!(ls >> slope)) throw fail();
      spec.layers.push_back(LayerSpec::leaky_relu(slope));
    } else if (word == "relu") {
      spec.layers.push_back(LayerSpec::relu());
    } else if (word == "fc") {
      std::size_t n;
      if (!(ls >> n)) throw fail();
      spec.layers.push_back(LayerSpec::fully_connected(n));
    } else if (word == "dropout") {
      double rate;
      if (!(ls >> rate)) throw fail();
      spec.layers.push_back(LayerSpec::dropout(rate));
    } else {
      throw fail();
    }
  }
  if (!have_input) throw FormatError("network description: missing input line");
  propagate_shapes(spec);
  return spec;
}

std::uint64_t architecture_digest(const NetworkSpec& spec) {
  NetworkSpec canonical = spec;
  for (auto& l : canonical.layers) l.mode = ConvMode::exact;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : describe(canonical)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace minconv::nn
