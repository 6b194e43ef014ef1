#pragma once

#include "fbgan/evaluate.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fbgan {

struct Rgb {
  std::uint8_t r, g, b;
};

/// 8-bit RGB raster, row-major.
struct Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  Image(int w, int h, Rgb fill);
  void set(int x, int y, Rgb c);
  void line(double x0, double y0, double x1, double y1, Rgb c);
  void rect(int x0, int y0, int x1, int y1, Rgb c);
  /// 5x7 bitmap text; lower case is drawn as upper case, unknown glyphs as blanks.
  void text(int x, int y, std::string_view s, Rgb c, int scale = 1);
};

void write_png(const Image& img, const std::filesystem::path& path);

/// Fixed colour per curve index; the legend swatches follow the same order.
Rgb series_color(std::size_t i);

/// Overlaid histogram curves sharing one window, with axes, tick labels and
/// a legend naming each series.
Image histogram_plot(const std::string& title,
                     const std::vector<std::pair<std::string, Histogram>>& series,
                     int width = 720, int height = 420);

}  // namespace fbgan
