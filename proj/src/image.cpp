#include "splatpose/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageRgb image_from_render(const RenderOutput& out) {
  ImageRgb img;
  img.width = out.width;
  img.height = out.height;
  img.data = out.color;
  return img;
}

ImageGray to_gray(const ImageRgb& img) {
  ImageGray g;
  g.width = img.width;
  g.height = img.height;
  g.data.resize(static_cast<std::size_t>(img.width) * img.height);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    g.data[i] = 0.299 * img.data[3 * i] + 0.587 * img.data[3 * i + 1] +
                0.114 * img.data[3 * i + 2];
  }
  return g;
}

ImageRgb read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::kIo, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kFormat, "invalid PNG: " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<png_byte> raw(static_cast<std::size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (int r = 0; r < h; ++r) {
    rows[r] = raw.data() + static_cast<std::size_t>(r) * w * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageRgb img;
  img.width = w;
  img.height = h;
  img.data.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.data[i] = raw[i] / 255.0;
  }
  return img;
}

void write_png(const ImageRgb& img, const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::kIo, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIo, "PNG write failed: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * 3);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width * 3; ++c) {
      const double v = img.data[static_cast<std::size_t>(r) * img.width * 3 + c];
      row[c] = static_cast<png_byte>(
          std::clamp(std::lround(v * 255.0), 0L, 255L));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace splatpose
