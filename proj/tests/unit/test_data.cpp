#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>

#include "minconv/data.hpp"
#include "oracles.hpp"

using namespace minconv;
using namespace minconv::data;
namespace fs = std::filesystem;

TEST_CASE("IDX round trip against an independent reader") {
  const auto dir = oracle::scratch_dir("idx");
  oracle::write_synthetic_mnist(dir, 30, 12);
  const auto img_bytes = read_file(dir / "train-images-idx3-ubyte");
  const auto raw = parse_idx_images(img_bytes);
  const auto ref = oracle::read_idx(dir / "train-images-idx3-ubyte");
  CHECK(ref.magic == kIdxImageMagic);
  CHECK(raw.count == ref.dims[0]);
  CHECK(raw.dims.height == ref.dims[1]);
  CHECK(raw.dims.width == ref.dims[2]);
  CHECK(raw.pixels == ref.payload);
  CHECK(encode_idx_images(raw) == img_bytes);

  const auto lab_bytes = read_file(dir / "train-labels-idx1-ubyte");
  const auto labels = parse_idx_labels(lab_bytes);
  CHECK(labels == oracle::read_idx(dir / "train-labels-idx1-ubyte").payload);
  CHECK(encode_idx_labels(labels) == lab_bytes);
}

TEST_CASE("IDX errors") {
  const auto dir = oracle::scratch_dir("idx_err");
  oracle::write_synthetic_mnist(dir, 4, 2);
  auto img = read_file(dir / "train-images-idx3-ubyte");
  auto lab = read_file(dir / "train-labels-idx1-ubyte");

  auto bad_magic = img;
  bad_magic[3] = 0x01;
  CHECK_THROWS_AS(parse_idx_images(bad_magic), FormatError);
  CHECK_THROWS_AS(parse_idx_images(std::vector<std::uint8_t>(img.begin(), img.end() - 1)), LengthError);
  CHECK_THROWS_AS(parse_idx_images(std::vector<std::uint8_t>(img.begin(), img.begin() + 10)), LengthError);
  CHECK_THROWS_AS(parse_idx_labels(img), FormatError);
  CHECK_THROWS_AS(parse_idx_labels(std::vector<std::uint8_t>(lab.begin(), lab.end() - 1)), LengthError);
  auto bad_label = lab;
  bad_label.back() = 10;
  CHECK_THROWS_AS(parse_idx_labels(bad_label), FormatError);
  CHECK_THROWS_AS(read_file(dir / "missing"), Error);

  fs::remove(dir / "t10k-labels-idx1-ubyte");
  CHECK_THROWS_AS(load_mnist(dir), Error);
}

TEST_CASE("CIFAR records keep the R, G, B plane order") {
  const auto dir = oracle::scratch_dir("cifar");
  oracle::write_synthetic_cifar(dir, 3, 4);
  const auto [raw, labels] = parse_cifar_records(read_file(dir / "test_batch.bin"));
  CHECK(raw.count == 4);
  CHECK(labels == std::vector<std::uint8_t>{0, 1, 2, 3});
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i : {0u, 1u, 500u, 1023u})
        CHECK(raw.pixels[(r * 3 + c) * 1024 + i] == (r * 7 + c * 31 + i) % 256);

  const auto pair = load_cifar10(dir);
  CHECK(pair.train.size() == 15);
  CHECK(pair.test.size() == 4);
  CHECK(pair.train.dims().channels == 3);
  CHECK(pair.norm.mean.size() == 3);
  CHECK(pair.train.labels[3] == 0);

  auto bytes = read_file(dir / "test_batch.bin");
  CHECK_THROWS_AS(parse_cifar_records(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 5)), FormatError);
  bytes[0] = 12;
  CHECK_THROWS_AS(parse_cifar_records(bytes), FormatError);

  // The files may also sit in the archive's own subdirectory.
  const auto nested = oracle::scratch_dir("cifar_nested");
  oracle::write_synthetic_cifar(nested / "cifar-10-batches-bin", 2, 2);
  CHECK(load_cifar10(nested).train.size() == 10);
}

TEST_CASE("standardization uses training statistics only") {
  const auto dir = oracle::scratch_dir("norm");
  oracle::write_synthetic_mnist(dir, 40, 20);
  const auto pair = load_mnist(dir);

  const auto train_px = oracle::read_idx(dir / "train-images-idx3-ubyte").payload;
  double s = 0, s2 = 0;
  for (auto p : train_px) {
    s += p / 255.0;
    s2 += (p / 255.0) * (p / 255.0);
  }
  const double m = s / train_px.size(), sd = std::sqrt(s2 / train_px.size() - m * m);
  CHECK(pair.norm.mean[0] == doctest::Approx(m).epsilon(1e-12));
  CHECK(pair.norm.stddev[0] == doctest::Approx(sd).epsilon(1e-12));

  double ts = 0, ts2 = 0;
  for (float v : pair.train.images.values()) {
    ts += v;
    ts2 += double{v} * v;
  }
  const double n = static_cast<double>(pair.train.images.size());
  CHECK(ts / n == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(ts2 / n == doctest::Approx(1.0).epsilon(1e-5));

  const auto test_px = oracle::read_idx(dir / "t10k-images-idx3-ubyte").payload;
  CHECK(pair.test.images[17] == doctest::Approx((test_px[17] / 255.0 - m) / sd).epsilon(1e-6));
  CHECK(pair.test.split == Split::test);
}

TEST_CASE("make_dataset validation") {
  RawImages raw;
  raw.count = 2;
  raw.dims = {1, 2, 2};
  raw.pixels = std::vector<std::uint8_t>(8, 100);
  const auto norm = fit_standardization(raw, false);
  CHECK(norm.stddev[0] == 1.0);
  const std::vector<std::uint8_t> one{3};
  CHECK_THROWS_AS(make_dataset(raw, one, norm, Split::train), FormatError);
  RawImages empty;
  CHECK_THROWS_AS(make_dataset(empty, {}, norm, Split::train), DegenerateInputError);
}

TEST_CASE("batch sampler properties") {
  for (std::size_t n : {1u, 7u, 64u, 100u}) {
    for (std::size_t b : {1u, 3u, 64u}) {
      BatchSampler s(n, b, 5, true);
      const auto batches = s.epoch_batches(2);
      CHECK(batches.size() == s.batches_per_epoch());
      std::vector<std::size_t> all;
      for (std::size_t i = 0; i < batches.size(); ++i) {
        CHECK(batches[i].size() == (i + 1 < batches.size() ? b : n - b * (batches.size() - 1)));
        all.insert(all.end(), batches[i].begin(), batches[i].end());
      }
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> id(n);
      std::iota(id.begin(), id.end(), 0);
      CHECK(all == id);
      CHECK(BatchSampler(n, b, 5, true).epoch_batches(2) == batches);
    }
  }
  BatchSampler s(50, 10, 1, true);
  CHECK(s.epoch_order(0) != s.epoch_order(1));
  BatchSampler plain(5, 2, 1, false);
  CHECK(plain.epoch_order(3) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(BatchSampler(5, 0, 1, true), UsageError);
}

TEST_CASE("gather and subset") {
  const auto dir = oracle::scratch_dir("gather");
  oracle::write_synthetic_mnist(dir, 50, 10);
  const auto pair = load_mnist(dir);
  const std::vector<std::size_t> idx{4, 0, 4};
  const auto b = gather(pair.train, idx);
  CHECK(b.y == std::vector<int>{pair.train.labels[4], pair.train.labels[0], pair.train.labels[4]});
  CHECK(std::equal(b.x.slab(0).begin(), b.x.slab(0).end(), pair.train.images.slab(4).begin()));
  CHECK_THROWS_AS(gather(pair.train, std::vector<std::size_t>{}), DegenerateInputError);

  const auto sub = subset(pair.train, 20, 3);
  CHECK(sub.size() == 20);
  CHECK(subset(pair.train, 20, 3).labels == sub.labels);
  CHECK(subset(pair.train, 0, 3).size() == 50);
  // Every subset image is a distinct training image.
  std::set<std::vector<float>> originals;
  for (std::size_t i = 0; i < pair.train.size(); ++i) {
    const auto v = pair.train.images.slab(i);
    originals.emplace(v.begin(), v.end());
  }
  std::set<std::vector<float>> picked;
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const auto v = sub.images.slab(i);
    CHECK(originals.count(std::vector<float>(v.begin(), v.end())) == 1);
    picked.emplace(v.begin(), v.end());
  }
  CHECK(picked.size() == 20);
}

TEST_CASE("real MNIST files, when available") {
  const char* env = std::getenv("MINCONV_DATA_DIR");
  fs::path dir = env ? fs::path(env) / "mnist" : fs::path();
  if (dir.empty() || !fs::exists(dir / "train-images-idx3-ubyte")) {
    MESSAGE("MINCONV_DATA_DIR/mnist not present; skipping real-data checks");
    return;
  }
  const auto pair = load_mnist(dir);
  CHECK(pair.train.size() == 60000);
  CHECK(pair.test.size() == 10000);
  CHECK(pair.train.labels[0] == 5);
  CHECK(pair.test.labels[0] == 7);
  CHECK(pair.norm.mean[0] == doctest::Approx(0.1307).epsilon(0.001));
  CHECK(pair.norm.stddev[0] == doctest::Approx(0.3081).epsilon(0.001));
}
