#include "fbgan/plot.hpp"

#include "fbgan/error.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>

namespace fbgan {

namespace fs = std::filesystem;

namespace {

// Rows top to bottom, bit 4 is the leftmost column.
struct Glyph {
  char c;
  std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}}, {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}}, {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
};

const Glyph* glyph(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.c == u) return &g;
  }
  return nullptr;
}

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kAxis{40, 40, 40};
constexpr Rgb kGrid{225, 225, 225};

}  // namespace

Image::Image(int w, int h, Rgb fill) : width(w), height(h), pixels(static_cast<std::size_t>(w * h * 3)) {
  for (int i = 0; i < w * h; ++i) {
    pixels[3 * i] = fill.r;
    pixels[3 * i + 1] = fill.g;
    pixels[3 * i + 2] = fill.b;
  }
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  auto* p = &pixels[static_cast<std::size_t>((y * width + x) * 3)];
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

void Image::line(double x0, double y0, double x1, double y1, Rgb c) {
  const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    set(static_cast<int>(std::lround(x0 + t * (x1 - x0))), static_cast<int>(std::lround(y0 + t * (y1 - y0))), c);
  }
}

void Image::rect(int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

void Image::text(int x, int y, std::string_view s, Rgb c, int scale) {
  for (char ch : s) {
    if (const Glyph* g = glyph(ch)) {
      for (int row = 0; row < 7; ++row) {
        for (int col = 0; col < 5; ++col) {
          if (g->rows[row] & (0x10 >> col)) rect(x + col * scale, y + row * scale, x + (col + 1) * scale, y + (row + 1) * scale, c);
        }
      }
    }
    x += 6 * scale;
  }
}

void write_png(const Image& img, const fs::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw StorageError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw StorageError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw StorageError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&img.pixels[static_cast<std::size_t>(y * img.width * 3)]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Rgb series_color(std::size_t i) {
  static constexpr Rgb palette[] = {{128, 128, 128}, {31, 119, 180}, {255, 127, 14},
                                    {214, 39, 40},   {148, 103, 189}, {44, 160, 44},
                                    {23, 190, 207},  {188, 189, 34}};
  return palette[i % std::size(palette)];
}

Image histogram_plot(const std::string& title,
                     const std::vector<std::pair<std::string, Histogram>>& series, int width,
                     int height) {
  if (series.empty()) throw ValidationError("histogram_plot needs at least one series");
  const Histogram& first = series.front().second;
  for (const auto& [name, h] : series) {
    if (!h.same_window(first)) throw ConfigurationError("plotted histograms must share a window");
  }
  Image img(width, height, kWhite);
  const int left = 60, right = width - 170, top = 30, bottom = height - 40;
  std::int64_t peak = 1;
  for (const auto& [name, h] : series) {
    for (auto c : h.counts) peak = std::max(peak, c);
  }
  const auto bins = first.counts.size();
  auto px = [&](double bin) { return left + (right - left) * bin / static_cast<double>(bins - 1); };
  auto py = [&](double count) { return bottom - (bottom - top) * count / static_cast<double>(peak); };

  for (int k = 1; k <= 4; ++k) {
    const double y = py(peak * k / 4.0);
    img.line(left, y, right, y, kGrid);
  }
  img.line(left, bottom, right, bottom, kAxis);
  img.line(left, top, left, bottom, kAxis);
  for (int k = 0; k <= 4; ++k) {
    const double hu = first.lo + (first.hi - first.lo) * k / 4.0;
    const double x = left + (right - left) * k / 4.0;
    img.line(x, bottom, x, bottom + 4, kAxis);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", hu);
    img.text(static_cast<int>(x) - 3 * static_cast<int>(std::string_view(buf).size()), bottom + 8, buf, kAxis);
  }
  img.text(left + (right - left) / 2 - 6, bottom + 22, "HU", kAxis);
  img.text(8, top - 2, std::to_string(peak), kAxis);
  img.text(left, 8, title, kAxis, 2);

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& counts = series[s].second.counts;
    const Rgb c = series_color(s);
    for (std::size_t b = 1; b < counts.size(); ++b) {
      img.line(px(b - 1.0), py(static_cast<double>(counts[b - 1])), px(static_cast<double>(b)),
               py(static_cast<double>(counts[b])), c);
    }
    const int ly = top + 6 + static_cast<int>(s) * 16;
    img.rect(right + 14, ly, right + 26, ly + 8, c);
    img.text(right + 32, ly, series[s].first, kAxis);
  }
  return img;
}

}  // namespace fbgan
