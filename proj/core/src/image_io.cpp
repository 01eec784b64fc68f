#include "lmk/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

#include "lmk/errors.hpp"
#include "lmk/geometry.hpp"

namespace lmk {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  png_uint_32 width = 0, height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = buffer.data() + r * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(3, static_cast<int>(height), static_cast<int>(width));
  for (png_uint_32 r = 0; r < height; ++r) {
    for (png_uint_32 c = 0; c < width; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        img.at(ch, static_cast<int>(r), static_cast<int>(c)) = static_cast<float>(rows[r][c * 3 + ch]) / 255.0f;
      }
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.rank() != 3 || (image.channels() != 1 && image.channels() != 3)) {
    throw DimensionError("write_png: expected a 1- or 3-channel image, got " + shape_string(image.shape()));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write image " + path.string());
  const int h = image.height(), w = image.width(), channels = image.channels();
  std::vector<unsigned char> buffer(static_cast<std::size_t>(h) * w * channels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        const float v = std::clamp(image.at(ch, r, c), 0.0f, 1.0f);
        buffer[(static_cast<std::size_t>(r) * w + c) * channels + ch] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int r = 0; r < h; ++r) rows[static_cast<std::size_t>(r)] = buffer.data() + static_cast<std::size_t>(r) * w * channels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height < 1 || width < 1) throw DimensionError("resize_bilinear: empty target size");
  if (image.height() == height && image.width() == width) return image;
  Image out(image.channels(), height, width);
  const double sr = static_cast<double>(image.height()) / height;
  const double sc = static_cast<double>(image.width()) / width;
  std::vector<float> px(static_cast<std::size_t>(image.channels()));
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      bilinear_sample(image, {r * sr, c * sc}, FillPolicy::edge_clamp(), px);
      for (int ch = 0; ch < image.channels(); ++ch) out.at(ch, r, c) = px[static_cast<std::size_t>(ch)];
    }
  }
  return out;
}

}  // namespace lmk
