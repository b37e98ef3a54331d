#include "minconv/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "minconv/data.hpp"
#include "minconv/errors.hpp"

namespace minconv::checkpoint {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw LengthError("checkpoint: truncated file");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }
  std::string str(std::size_t n) {
    auto s = take(n);
    return {s.begin(), s.end()};
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, end);
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("checkpoint: bad value for " + key);
  return v;
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("checkpoint: bad value for " + key);
  return v;
}

const std::string& meta_at(const Checkpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw FormatError("checkpoint: missing metadata key " + key);
  return it->second;
}

std::string conv_key(std::size_t i, const char* field) {
  return "conv." + std::to_string(i) + "." + field;
}

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

std::uint64_t Checkpoint::epoch() const { return parse_u64(meta_at(*this, "epoch"), "epoch"); }

std::uint64_t Checkpoint::digest() const {
  const auto& s = meta_at(*this, "digest");
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("checkpoint: bad digest");
  return v;
}

nn::NetworkSpec Checkpoint::network_spec() const {
  std::string text = meta_at(*this, "network");
  for (auto& ch : text) {
    if (ch == '|') ch = '\n';
  }
  return nn::parse_network_spec(text);
}

std::vector<ConvMode> Checkpoint::modes() const { return network_spec().conv_modes(); }

std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint: metadata entry '" + k + "' is not representable");
    }
    meta += k + "=" + v + "\n";
  }
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put_u64(out, d);
    for (float v : t.value.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < sizeof kMagic) throw LengthError("checkpoint: truncated before the magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  r.take(sizeof kMagic);
  Checkpoint c;
  std::istringstream meta(r.str(r.u32()));
  std::string line;
  while (std::getline(meta, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed metadata line");
    c.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint: bad rank for " + t.name);
    Extents shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d == 0 || d > (std::size_t{1} << 40) || total > (std::size_t{1} << 40) / d) {
        throw FormatError("checkpoint: bad extent for " + t.name);
      }
      total *= d;
    }
    if (total * 4 > bytes.size()) throw LengthError("checkpoint: truncated tensor " + t.name);
    t.value = Tensor<float>(shape);
    for (float& v : t.value.values()) v = std::bit_cast<float>(r.u32());
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  if (meta_at(c, "format") != "1") throw FormatError("checkpoint: unsupported format version");
  return c;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path.string());
}

Checkpoint load(const std::filesystem::path& path) { return decode(data::read_file(path)); }

Checkpoint capture(nn::Network<float>& net, std::uint64_t epoch, const train::Optimizer<float>* optimizer) {
  Checkpoint c;
  std::string spec = nn::describe(net.spec());
  if (!spec.empty() && spec.back() == '\n') spec.pop_back();
  for (auto& ch : spec) {
    if (ch == '\n') ch = '|';
  }
  char digest[17];
  std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(nn::architecture_digest(net.spec())));
  c.meta["format"] = "1";
  c.meta["network"] = spec;
  c.meta["digest"] = digest;
  c.meta["epoch"] = std::to_string(epoch);
  c.meta["modes"] = nn::format_mode_list(net.spec().conv_modes());

  for (const auto& p : net.params()) c.tensors.push_back({p.name, p.value->cast<float>()});
  const auto convs = net.conv_layers();
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& st = convs[i]->core().stats;
    c.meta[conv_key(i, "mu_x")] = fmt_double(st.mu_x_running);
    c.meta[conv_key(i, "gamma")] = fmt_double(st.gamma);
    c.meta[conv_key(i, "updates")] = std::to_string(st.updates);
    if (!st.mu_w.empty()) {
      Tensor<float> mw({st.mu_w.size()});
      for (std::size_t k = 0; k < st.mu_w.size(); ++k) mw[k] = static_cast<float>(st.mu_w[k]);
      c.tensors.push_back({conv_key(i, "mu_w"), std::move(mw)});
    }
  }
  if (optimizer != nullptr) {
    c.meta["optimizer"] = train::optimizer_name(optimizer->config());
    c.meta["optimizer.steps"] = std::to_string(optimizer->steps());
    const auto& state = optimizer->state();
    c.meta["optimizer.buffers"] = std::to_string(state.size());
    for (std::size_t j = 0; j < state.size(); ++j) {
      c.tensors.push_back({"optimizer." + std::to_string(j), state[j]});
    }
  }
  return c;
}

void restore_network(const Checkpoint& ckpt, nn::Network<float>& net) {
  if (ckpt.digest() != nn::architecture_digest(net.spec())) {
    throw IncompatibleCheckpointError("checkpoint architecture does not match network '" + net.spec().name + "'");
  }
  for (const auto& p : net.params()) {
    const Tensor<float>* t = ckpt.find(p.name);
    if (t == nullptr) throw IncompatibleCheckpointError("checkpoint lacks parameter " + p.name);
    if (t->shape() != p.value->shape()) {
      throw IncompatibleCheckpointError("checkpoint parameter " + p.name + " has shape " + to_string(t->shape()) +
                                        ", expected " + to_string(p.value->shape()));
    }
    *p.value = *t;
  }
  const auto convs = net.conv_layers();
  for (std::size_t i = 0; i < convs.size(); ++i) {
    auto& st = convs[i]->core().stats;
    st.mu_x_running = parse_double(meta_at(ckpt, conv_key(i, "mu_x")), conv_key(i, "mu_x"));
    st.gamma = parse_double(meta_at(ckpt, conv_key(i, "gamma")), conv_key(i, "gamma"));
    st.updates = parse_u64(meta_at(ckpt, conv_key(i, "updates")), conv_key(i, "updates"));
    st.mu_w = filter_abs_means(convs[i]->core().weights);
  }
}

void restore_optimizer(const Checkpoint& ckpt, train::Optimizer<float>& optimizer) {
  auto it = ckpt.meta.find("optimizer");
  if (it == ckpt.meta.end() || it->second != train::optimizer_name(optimizer.config())) return;
  const std::size_t n = parse_u64(meta_at(ckpt, "optimizer.buffers"), "optimizer.buffers");
  std::vector<Tensor<float>> state;
  for (std::size_t j = 0; j < n; ++j) {
    const Tensor<float>* t = ckpt.find("optimizer." + std::to_string(j));
    if (t == nullptr) throw FormatError("checkpoint: missing optimizer buffer " + std::to_string(j));
    state.push_back(*t);
  }
  optimizer.restore(std::move(state), parse_u64(meta_at(ckpt, "optimizer.steps"), "optimizer.steps"));
}

}  // namespace minconv::checkpoint
