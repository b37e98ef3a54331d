#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "minconv/tensor.hpp"

namespace minconv::data {

enum class Split { train, test };

/// Standardized images with their labels.
struct Dataset {
  Tensor<float> images;       // [N, C, H, W]
  std::vector<int> labels;    // N values in [0, 9]
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  ImageDims dims() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
};

/// Per-channel affine normalization (x - mean) / stddev.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct DatasetPair {
  Dataset train;
  Dataset test;
  Standardization norm;
};

// ---- raw formats ---------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 3073;

struct RawImages {
  std::size_t count = 0;
  ImageDims dims;
  std::vector<std::uint8_t> pixels;  // count * dims.size(), CHW per image
};

/// IDX image file: big-endian magic 0x00000803, count, rows, cols, then bytes.
RawImages parse_idx_images(std::span<const std::uint8_t> bytes);
/// IDX label file: big-endian magic 0x00000801, count, then bytes.
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// CIFAR-10 batch: 3073-byte records of one label byte then 1024 R, 1024 G and
/// 1024 B bytes.
std::pair<RawImages, std::vector<std::uint8_t>> parse_cifar_records(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_idx_images(const RawImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

// ---- datasets --------------------------------------------------------------------

/// Per-channel mean/stddev of pixel/255 (one global channel when
/// `per_channel` is false).
Standardization fit_standardization(const RawImages& raw, bool per_channel);
Dataset make_dataset(const RawImages& raw, std::span<const std::uint8_t> labels, const Standardization& norm,
                     Split split);

/// Reads train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-images-idx3-ubyte
/// and t10k-labels-idx1-ubyte from `dir`. Pixels are scaled to [0,1] and
/// standardized with one mean/stddev computed on the training split.
DatasetPair load_mnist(const std::filesystem::path& dir);

/// Reads data_batch_1..5.bin and test_batch.bin from `dir` (or its
/// cifar-10-batches-bin subdirectory). Standardized per channel with training
/// statistics.
DatasetPair load_cifar10(const std::filesystem::path& dir);

/// The first n images after a seeded shuffle, order preserved as shuffled.
Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed);

// ---- batching ---------------------------------------------------------------------

struct Batch {
  Tensor<float> x;
  std::vector<int> y;
};

/// Deterministic partition of a dataset into batches. The permutation depends
/// only on (seed, epoch); the last partial batch is kept.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  std::vector<std::vector<std::size_t>> epoch_batches(std::uint64_t epoch) const;
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

}  // namespace minconv::data
