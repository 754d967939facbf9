#include "svae/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "svae/errors.hpp"

namespace svae {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ContractError("write_png: channels must be 1 or 3");
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw DimensionError("write_png: pixel buffer does not match geometry");
  }
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&desc, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw IoError("cannot write png " + path.string() + ": " + msg);
  }
}

Image8 read_png(const std::filesystem::path& path) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.c_str())) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw FormatError("png " + path.string() + ": " + msg, 0);
  }
  const bool gray = (desc.format & PNG_FORMAT_FLAG_COLOR) == 0;
  desc.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 img;
  img.width = desc.width;
  img.height = desc.height;
  img.channels = gray ? 1 : 3;
  img.pixels.resize(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw FormatError("png " + path.string() + ": " + msg, 0);
  }
  return img;
}

namespace {

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

}  // namespace

Image8 read_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  Image8 img;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError("jpeg: cannot decode " + path.string(), 0);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img.width = cinfo.output_width;
  img.height = cinfo.output_height;
  img.channels = static_cast<std::size_t>(cinfo.output_components);
  img.pixels.resize(img.width * img.height * img.channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + cinfo.output_scanline * img.width * img.channels;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

Image8 tile_grid(const Tensor& images, std::size_t rows) {
  if (images.rank() != 4) {
    throw DimensionError("tile_grid: expected [k, C, H, W], got " + shape_str(images.shape()));
  }
  const std::size_t k = images.dim(0), ch = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (ch != 1 && ch != 3) throw DimensionError("tile_grid: channel axis must be 1 or 3");
  if (rows == 0 || k == 0) throw ContractError("tile_grid: need at least one row and one image");
  const std::size_t cols = (k + rows - 1) / rows;
  if (k > rows * cols) throw ContractError("tile_grid: too many images for the grid");
  for (std::size_t i = 0; i < images.numel(); ++i) {
    const double v = images[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("tile_grid: pixel value " + std::to_string(v) + " at index " +
                          std::to_string(i) + " is outside [0, 1]");
    }
  }

  Image8 out;
  out.channels = ch;
  out.width = cols * w + (cols - 1) * kGridGutter;
  out.height = rows * h + (rows - 1) * kGridGutter;
  out.pixels.assign(out.width * out.height * ch, 0);
  // Gutters are white.
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const bool gutter = (x % (w + kGridGutter)) >= w || (y % (h + kGridGutter)) >= h;
      if (!gutter) continue;
      for (std::size_t c = 0; c < ch; ++c) out.pixels[(y * out.width + x) * ch + c] = 255;
    }
  }
  for (std::size_t n = 0; n < k; ++n) {
    const std::size_t oy = (n / cols) * (h + kGridGutter), ox = (n % cols) * (w + kGridGutter);
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double v = images[((n * ch + c) * h + y) * w + x];
          out.pixels[((oy + y) * out.width + ox + x) * ch + c] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
  }
  return out;
}

void save_png_grid(const Tensor& images, std::size_t rows, const std::filesystem::path& path) {
  write_png(path, tile_grid(images, rows));
}

}  // namespace svae
