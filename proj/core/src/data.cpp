#include "minconv/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "minconv/errors.hpp"
#include "minconv/rng.hpp"

namespace minconv::data {

namespace fs = std::filesystem;

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

RawImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw LengthError("IDX image file shorter than its 16-byte header");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) throw FormatError("IDX image file has magic " + hex(magic) + ", expected 0x00000803");
  RawImages r;
  r.count = read_be32(bytes, 4);
  r.dims = {1, read_be32(bytes, 8), read_be32(bytes, 12)};
  const std::size_t need = r.count * r.dims.size();
  if (bytes.size() - 16 < need) {
    throw LengthError("IDX image file truncated: header announces " + std::to_string(need) + " pixel bytes, found " +
                      std::to_string(bytes.size() - 16));
  }
  r.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return r;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw LengthError("IDX label file shorter than its 8-byte header");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxLabelMagic) throw FormatError("IDX label file has magic " + hex(magic) + ", expected 0x00000801");
  const std::size_t count = read_be32(bytes, 4);
  if (bytes.size() - 8 < count) {
    throw LengthError("IDX label file truncated: header announces " + std::to_string(count) + " labels, found " +
                      std::to_string(bytes.size() - 8));
  }
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  for (std::uint8_t l : labels) {
    if (l > 9) throw FormatError("IDX label " + std::to_string(l) + " outside [0,9]");
  }
  return labels;
}

std::pair<RawImages, std::vector<std::uint8_t>> parse_cifar_records(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 batch of " + std::to_string(bytes.size()) + " bytes is not a whole number of " +
                      std::to_string(kCifarRecordBytes) + "-byte records");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  RawImages images;
  images.count = n;
  images.dims = {3, 32, 32};
  images.pixels.reserve(n * 3072);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto record = bytes.subspan(i * kCifarRecordBytes, kCifarRecordBytes);
    if (record[0] > 9) throw FormatError("CIFAR-10 label " + std::to_string(record[0]) + " outside [0,9]");
    labels[i] = record[0];
    images.pixels.insert(images.pixels.end(), record.begin() + 1, record.end());
  }
  return {std::move(images), std::move(labels)};
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::uint8_t> encode_idx_images(const RawImages& images) {
  if (images.dims.channels != 1) throw FormatError("IDX images are single-channel");
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.count));
  write_be32(out, static_cast<std::uint32_t>(images.dims.height));
  write_be32(out, static_cast<std::uint32_t>(images.dims.width));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

Standardization fit_standardization(const RawImages& raw, bool per_channel) {
  const std::size_t channels = per_channel ? raw.dims.channels : 1;
  const std::size_t plane = raw.dims.height * raw.dims.width;
  std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
  std::vector<std::size_t> count(channels, 0);
  for (std::size_t i = 0; i < raw.count; ++i) {
    for (std::size_t c = 0; c < raw.dims.channels; ++c) {
      const std::size_t slot = per_channel ? c : 0;
      const std::uint8_t* p = raw.pixels.data() + (i * raw.dims.channels + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const double v = p[j] / 255.0;
        sum[slot] += v;
        sum_sq[slot] += v * v;
      }
      count[slot] += plane;
    }
  }
  Standardization norm;
  for (std::size_t c = 0; c < channels; ++c) {
    if (count[c] == 0) throw DegenerateInputError("cannot standardize an empty image set");
    const double m = sum[c] / static_cast<double>(count[c]);
    const double var = std::max(sum_sq[c] / static_cast<double>(count[c]) - m * m, 0.0);
    norm.mean.push_back(m);
    norm.stddev.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return norm;
}

Dataset make_dataset(const RawImages& raw, std::span<const std::uint8_t> labels, const Standardization& norm,
                     Split split) {
  if (raw.count == 0) throw DegenerateInputError("dataset has no images");
  if (labels.size() != raw.count) {
    throw FormatError(std::to_string(raw.count) + " images but " + std::to_string(labels.size()) + " labels");
  }
  Dataset ds;
  ds.split = split;
  ds.images = Tensor<float>({raw.count, raw.dims.channels, raw.dims.height, raw.dims.width});
  const std::size_t plane = raw.dims.height * raw.dims.width;
  for (std::size_t i = 0; i < raw.count; ++i) {
    for (std::size_t c = 0; c < raw.dims.channels; ++c) {
      const std::size_t slot = norm.mean.size() == 1 ? 0 : c;
      const double m = norm.mean.at(slot), s = norm.stddev.at(slot);
      const std::size_t off = (i * raw.dims.channels + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        ds.images[off + j] = static_cast<float>((raw.pixels[off + j] / 255.0 - m) / s);
      }
    }
  }
  ds.labels.assign(labels.begin(), labels.end());
  return ds;
}

DatasetPair load_mnist(const fs::path& dir) {
  auto need = [&](const char* name) {
    const fs::path p = dir / name;
    if (!fs::exists(p)) throw Error("MNIST file not found: " + p.string());
    return read_file(p);
  };
  const RawImages train_images = parse_idx_images(need("train-images-idx3-ubyte"));
  const auto train_labels = parse_idx_labels(need("train-labels-idx1-ubyte"));
  const RawImages test_images = parse_idx_images(need("t10k-images-idx3-ubyte"));
  const auto test_labels = parse_idx_labels(need("t10k-labels-idx1-ubyte"));

  DatasetPair d;
  d.norm = fit_standardization(train_images, false);
  d.train = make_dataset(train_images, train_labels, d.norm, Split::train);
  d.test = make_dataset(test_images, test_labels, d.norm, Split::test);
  return d;
}

DatasetPair load_cifar10(const fs::path& dir) {
  fs::path root = dir;
  if (!fs::exists(root / "data_batch_1.bin") && fs::exists(root / "cifar-10-batches-bin" / "data_batch_1.bin")) {
    root /= "cifar-10-batches-bin";
  }
  auto load = [&](const std::string& name) {
    const fs::path p = root / name;
    if (!fs::exists(p)) throw Error("CIFAR-10 file not found: " + p.string());
    return parse_cifar_records(read_file(p));
  };
  RawImages train_images;
  train_images.dims = {3, 32, 32};
  std::vector<std::uint8_t> train_labels;
  for (int b = 1; b <= 5; ++b) {
    auto [img, lab] = load("data_batch_" + std::to_string(b) + ".bin");
    train_images.count += img.count;
    train_images.pixels.insert(train_images.pixels.end(), img.pixels.begin(), img.pixels.end());
    train_labels.insert(train_labels.end(), lab.begin(), lab.end());
  }
  auto [test_images, test_labels] = load("test_batch.bin");

  DatasetPair d;
  d.norm = fit_standardization(train_images, true);
  d.train = make_dataset(train_images, train_labels, d.norm, Split::train);
  d.test = make_dataset(test_images, test_labels, d.norm, Split::test);
  return d;
}

Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n >= ds.size()) return ds;
  Rng rng(derive_seed(seed, 0x5eb5e7));
  std::vector<std::size_t> order = rng.permutation(ds.size());
  order.resize(n);
  Batch b = gather(ds, order);
  return Dataset{std::move(b.x), std::move(b.y), ds.split};
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size == 0) throw UsageError("batch size must be >= 1");
}

std::vector<std::size_t> BatchSampler::epoch_order(std::uint64_t epoch) const {
  if (shuffle_) {
    Rng rng(derive_seed(seed_, epoch));
    return rng.permutation(size_);
  }
  std::vector<std::size_t> order(size_);
  for (std::size_t i = 0; i < size_; ++i) order[i] = i;
  return order;
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch_batches(std::uint64_t epoch) const {
  const std::vector<std::size_t> order = epoch_order(epoch);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::size_t BatchSampler::batches_per_epoch() const { return (size_ + batch_size_ - 1) / batch_size_; }

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DegenerateInputError("cannot gather an empty batch");
  const ImageDims d = ds.dims();
  Batch b{Tensor<float>({indices.size(), d.channels, d.height, d.width}), {}};
  b.y.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = ds.images.slab(indices[i]);
    std::copy(src.begin(), src.end(), b.x.slab(i).begin());
    b.y.push_back(ds.labels.at(indices[i]));
  }
  return b;
}

}  // namespace minconv::data
