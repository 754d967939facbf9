#include "svae/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>

#include "svae/errors.hpp"
#include "svae/image_io.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

// Reads a whole file; gzip streams are inflated, plain files pass through.
std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof buf);
    if (n < 0) {
      gzclose(f);
      throw FormatError("corrupt compressed stream in " + path.string(), out.size());
    }
    if (n == 0) break;
    out.insert(out.end(), buf, buf + n);
  }
  gzclose(f);
  return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at, const fs::path& path) {
  if (b.size() < at + 4) {
    throw FormatError(path.string() + ": truncated IDX header", b.size());
  }
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::ofstream& f, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  f.write(b, 4);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::vector<std::uint8_t> read_idx_labels(const fs::path& path) {
  const auto bytes = read_bytes(path);
  const auto magic = be32(bytes, 0, path);
  if (magic != kIdxLabels) {
    throw FormatError(path.string() + ": bad IDX label magic " + hex32(magic) + ", expected " +
                          hex32(kIdxLabels),
                      0);
  }
  const std::size_t n = be32(bytes, 4, path);
  if (bytes.size() != 8 + n) {
    throw FormatError(path.string() + ": expected " + std::to_string(8 + n) +
                          " bytes of labels, found " + std::to_string(bytes.size()),
                      std::min<std::size_t>(bytes.size(), 8 + n));
  }
  return {bytes.begin() + 8, bytes.end()};
}

fs::path find_file(const fs::path& dir, const std::string& name) {
  for (const auto& candidate : {dir / name, dir / (name + ".gz")}) {
    if (fs::exists(candidate)) return candidate;
  }
  throw IoError("missing " + (dir / name).string() + "[.gz]");
}

// Bilinear sample with half-pixel centers, clamped at the borders.
double bilinear(const Image8& img, std::size_t c, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  const auto y0 = static_cast<std::size_t>(y), x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  auto px = [&](std::size_t yy, std::size_t xx) {
    return static_cast<double>(img.pixels[(yy * img.width + xx) * img.channels + c]);
  };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
         fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
}

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

ImageShape Dataset::image_shape() const {
  if (images.rank() != 4) return {0, 0, 0};
  return {images.dim(1), images.dim(2), images.dim(3)};
}

Dataset Dataset::slice(std::size_t offset, std::size_t count) const {
  if (offset + count > size()) {
    throw ContractError("dataset slice [" + std::to_string(offset) + ", " +
                        std::to_string(offset + count) + ") exceeds " + std::to_string(size()) +
                        " images");
  }
  const std::size_t per = image_shape().numel();
  Dataset out;
  out.name = name;
  out.split = split;
  Shape shape = images.shape();
  shape[0] = count;
  auto first = images.data().begin() + static_cast<std::ptrdiff_t>(offset * per);
  out.images = Tensor(shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * per)));
  if (!labels.empty()) {
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(offset),
                      labels.begin() + static_cast<std::ptrdiff_t>(offset + count));
  }
  return out;
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t per = image_shape().numel();
  Shape shape = images.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractError("dataset index out of range");
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * per), per,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

void Dataset::validate() const {
  if (size() == 0) throw ContractError("dataset '" + name + "' is empty");
  for (double v : images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("dataset '" + name + "' has a pixel outside [0, 1]");
    }
  }
}

Dataset load_mnist_idx(const fs::path& images, const std::optional<fs::path>& labels) {
  const auto bytes = read_bytes(images);
  const auto magic = be32(bytes, 0, images);
  if (magic != kIdxImages) {
    throw FormatError(images.string() + ": bad IDX image magic " + hex32(magic) + ", expected " +
                          hex32(kIdxImages),
                      0);
  }
  const std::size_t n = be32(bytes, 4, images);
  const std::size_t rows = be32(bytes, 8, images);
  const std::size_t cols = be32(bytes, 12, images);
  const std::size_t expected = 16 + n * rows * cols;
  if (bytes.size() != expected) {
    throw FormatError(images.string() + ": expected " + std::to_string(expected) +
                          " bytes for " + std::to_string(n) + " images of " +
                          std::to_string(rows) + "x" + std::to_string(cols) + ", found " +
                          std::to_string(bytes.size()),
                      std::min(bytes.size(), expected));
  }
  std::vector<double> px(n * rows * cols);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = bytes[16 + i] / 255.0;

  Dataset ds;
  ds.images = Tensor(Shape{n, 1, rows, cols}, std::move(px));
  ds.name = "mnist";
  if (labels) {
    ds.labels = read_idx_labels(*labels);
    if (ds.labels.size() != n) {
      throw FormatError(labels->string() + ": " + std::to_string(ds.labels.size()) +
                            " labels for " + std::to_string(n) + " images",
                        4);
    }
  }
  return ds;
}

Dataset load_mnist_dir(const fs::path& dir, Split split) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  const std::string prefix = split == Split::train ? "train" : "t10k";
  std::optional<fs::path> labels;
  try {
    labels = find_file(dir, prefix + "-labels-idx1-ubyte");
  } catch (const IoError&) {
  }
  Dataset ds = load_mnist_idx(find_file(dir, prefix + "-images-idx3-ubyte"), labels);
  ds.split = split;
  return ds;
}

void write_mnist_idx(const fs::path& path, const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != 1) {
    throw DimensionError("write_mnist_idx: expected [n, 1, H, W], got " + shape_str(images.shape()));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  put_be32(f, kIdxImages);
  put_be32(f, static_cast<std::uint32_t>(images.dim(0)));
  put_be32(f, static_cast<std::uint32_t>(images.dim(2)));
  put_be32(f, static_cast<std::uint32_t>(images.dim(3)));
  for (double v : images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("write_mnist_idx: pixel outside [0, 1]");
    f.put(static_cast<char>(std::lround(v * 255.0)));
  }
}

void write_idx_labels(const fs::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  put_be32(f, kIdxLabels);
  put_be32(f, static_cast<std::uint32_t>(labels.size()));
  f.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset load_cifar10_file(const fs::path& file) {
  const auto bytes = read_bytes(file);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    const std::size_t whole = bytes.size() / kCifarRecord;
    throw FormatError(file.string() + ": length " + std::to_string(bytes.size()) +
                          " is not a multiple of " + std::to_string(kCifarRecord) +
                          " (expected " + std::to_string((whole + 1) * kCifarRecord) + " for " +
                          std::to_string(whole + 1) + " records)",
                      whole * kCifarRecord);
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset ds;
  ds.name = "cifar10";
  ds.labels.resize(n);
  std::vector<double> px(n * 3 * 32 * 32);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    ds.labels[r] = rec[0];
    for (std::size_t i = 0; i < 3 * 32 * 32; ++i) px[r * 3072 + i] = rec[1 + i] / 255.0;
  }
  ds.images = Tensor(Shape{n, 3, 32, 32}, std::move(px));
  return ds;
}

Dataset load_cifar10(const fs::path& dir, Split split) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  fs::path root = dir;
  if (fs::is_directory(dir / "cifar-10-batches-bin")) root = dir / "cifar-10-batches-bin";
  std::vector<std::string> files;
  if (split == Split::train) {
    for (int i = 1; i <= 5; ++i) files.push_back("data_batch_" + std::to_string(i) + ".bin");
  } else {
    files.push_back("test_batch.bin");
  }
  std::vector<double> px;
  Dataset ds;
  for (const auto& name : files) {
    Dataset part = load_cifar10_file(find_file(root, name));
    px.insert(px.end(), part.images.data().begin(), part.images.data().end());
    ds.labels.insert(ds.labels.end(), part.labels.begin(), part.labels.end());
  }
  ds.images = Tensor(Shape{ds.labels.size(), 3, 32, 32}, std::move(px));
  ds.name = "cifar10";
  ds.split = split;
  return ds;
}

Dataset load_image_folder(const fs::path& dir, std::size_t size) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .png/.jpg images in " + dir.string());

  std::vector<double> px;
  px.reserve(files.size() * 3 * size * size);
  for (const auto& file : files) {
    auto ext = file.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    const Image8 img = ext == ".png" ? read_png(file) : read_jpeg(file);
    const std::size_t side = std::min(img.width, img.height);
    const double oy = static_cast<double>(img.height - side) / 2.0;
    const double ox = static_cast<double>(img.width - side) / 2.0;
    const double step = static_cast<double>(side) / static_cast<double>(size);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src_c = img.channels == 1 ? 0 : c;
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
          const double sy = oy + (static_cast<double>(y) + 0.5) * step - 0.5;
          const double sx = ox + (static_cast<double>(x) + 0.5) * step - 0.5;
          px.push_back(bilinear(img, src_c, sy, sx) / 255.0);
        }
    }
  }
  Dataset ds;
  ds.images = Tensor(Shape{files.size(), 3, size, size}, std::move(px));
  ds.name = "folder";
  return ds;
}

BatchIterator::BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed,
                             bool drop_last)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed), drop_last_(drop_last) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
}

std::vector<std::size_t> BatchIterator::permutation(std::size_t epoch) const {
  std::vector<std::size_t> idx(size_);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed_, epoch));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return drop_last_ ? size_ / batch_size_ : (size_ + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<std::size_t>> BatchIterator::batches(std::size_t epoch) const {
  const auto perm = permutation(epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < batches_per_epoch(); ++b) {
    const std::size_t begin = b * batch_size_;
    const std::size_t end = std::min(begin + batch_size_, size_);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                     perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace svae
