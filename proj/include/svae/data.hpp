#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svae/model.hpp"
#include "svae/tensor.hpp"

namespace svae {

enum class Split { train, test };
std::string to_string(Split s);

// Images [n, C, H, W] with every value in [0, 1]. Labels are passed through
// untouched (the models are unsupervised) and may be empty.
struct Dataset {
  Tensor images;
  std::vector<std::uint8_t> labels;
  std::string name;
  Split split = Split::train;

  std::size_t size() const { return images.rank() == 4 ? images.dim(0) : 0; }
  ImageShape image_shape() const;

  // Contiguous rows [offset, offset + count).
  Dataset slice(std::size_t offset, std::size_t count) const;
  // Copies the selected images into a [k, C, H, W] batch.
  Tensor gather(std::span<const std::size_t> indices) const;
  // Throws ContractError unless n > 0 and every pixel is in [0, 1].
  void validate() const;
};

// IDX (big-endian): magic 0x00000803 for images [n, rows, cols], 0x00000801
// for labels [n]. Gzipped files are read transparently. Pixels are scaled
// by 1/255. Throws FormatError with the failing byte offset.
Dataset load_mnist_idx(const std::filesystem::path& images,
                       const std::optional<std::filesystem::path>& labels = std::nullopt);
// Looks for {train,t10k}-images-idx3-ubyte[.gz] (and labels) inside `dir`.
Dataset load_mnist_dir(const std::filesystem::path& dir, Split split);

// Writes images [n, 1, H, W] as an uncompressed IDX file, quantizing with
// round(255 * x).
void write_mnist_idx(const std::filesystem::path& path, const Tensor& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// CIFAR-10 binary: 3073-byte records (label byte, then R, G, B planes of
// 32x32). Output [n, 3, 32, 32] scaled by 1/255.
Dataset load_cifar10_file(const std::filesystem::path& file);
// data_batch_1..5.bin for train, test_batch.bin for test.
Dataset load_cifar10(const std::filesystem::path& dir, Split split);

// Every .png/.jpg/.jpeg in `dir` (sorted by name), center-cropped to a
// square and bilinearly resized to size x size RGB.
Dataset load_image_folder(const std::filesystem::path& dir, std::size_t size = 64);

// Seeded shuffling. The permutation for an epoch is a pure function of
// (seed, epoch); one epoch visits every index exactly once (or all but the
// final partial batch when drop_last is set).
class BatchIterator {
 public:
  BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed,
                bool drop_last);

  std::vector<std::size_t> permutation(std::size_t epoch) const;
  std::vector<std::vector<std::size_t>> batches(std::size_t epoch) const;
  std::size_t batches_per_epoch() const;
  std::size_t batch_size() const { return batch_size_; }

 private:
  std::size_t size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool drop_last_;
};

}  // namespace svae
