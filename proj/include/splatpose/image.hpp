#pragma once

#include <filesystem>
#include <vector>

#include "splatpose/rasterizer.hpp"

namespace splatpose {

struct ImageRgb {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // H*W*3 row-major, channel fastest, in [0,1]

  double at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
};

struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // H*W row-major, in [0,1]

  double at(int row, int col) const {
    return data[static_cast<std::size_t>(row) * width + col];
  }
};

ImageRgb image_from_render(const RenderOutput& out);
ImageGray to_gray(const ImageRgb& img);  // Rec.601 luma

// 8-bit RGB PNG. Reading accepts gray/palette/RGBA inputs and converts.
ImageRgb read_png(const std::filesystem::path& path);
void write_png(const ImageRgb& img, const std::filesystem::path& path);

}  // namespace splatpose
