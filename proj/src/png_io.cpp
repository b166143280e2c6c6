#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "uqsr/errors.hpp"
#include "uqsr/imaging.hpp"

namespace uqsr {

namespace {

struct FileCloser {
  std::FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

ImageTensor load_image(const std::string& path) {
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "rb");
  if (!fc.f) throw IoError("cannot open image file: " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fc.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed");
  }

  // libpng reports errors via longjmp; buffers live outside the jump scope.
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  int width = 0, height = 0, channels = 0;
  bool format_problem = false;
  std::string format_msg;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt or truncated PNG: " + path);
  }

  png_init_io(png, fc.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS) || color_type == PNG_COLOR_TYPE_GRAY_ALPHA ||
      color_type == PNG_COLOR_TYPE_RGB_ALPHA) {
    format_problem = true;
    format_msg = "alpha channels unsupported: " + path;
  }
  png_read_update_info(png, info);
  channels = png_get_channels(png, info);

  if (!format_problem && channels != 1 && channels != 3) {
    format_problem = true;
    format_msg = "unsupported channel count " + std::to_string(channels) + ": " + path;
  }

  if (!format_problem) {
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    pixels.resize(rowbytes * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = pixels.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }

  png_destroy_read_struct(&png, &info, nullptr);
  if (format_problem) throw FormatError(format_msg);

  ImageTensor img(height, width, channels);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y)
    for (std::size_t i = 0; i < rowbytes; ++i)
      img.data[static_cast<std::size_t>(y) * rowbytes + i] =
          static_cast<double>(pixels[static_cast<std::size_t>(y) * rowbytes + i]) / 255.0;
  return img;
}

namespace {

unsigned char quantize8(double v) {
  const double s = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<unsigned char>(std::lround(s * 255.0));
}

void write_png(const std::string& path, int height, int width, int channels, int bit_depth,
               const std::vector<unsigned char>& bytes) {
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "wb");
  if (!fc.f) throw IoError("cannot open file for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path);
  }

  png_init_io(png, fc.f);
  const int color_type = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(bytes.data() + rowbytes * y);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void save_image(const ImageTensor& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw FormatError("save_image requires 1 or 3 channels");
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = quantize8(img.data[i]);
  write_png(path, img.height, img.width, img.channels, 8, bytes);
}

void save_image_gray16(const ImageTensor& img, const std::string& path, double vmax) {
  if (img.channels != 1) throw FormatError("save_image_gray16 requires a single channel");
  // PNG stores 16-bit samples big-endian.
  std::vector<unsigned char> bytes(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    double s = vmax > 0.0 ? img.data[i] / vmax : 0.0;
    s = s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s);
    const std::uint16_t q = static_cast<std::uint16_t>(std::lround(s * 65535.0));
    bytes[2 * i] = static_cast<unsigned char>(q >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  write_png(path, img.height, img.width, 1, 16, bytes);
}

}  // namespace uqsr
