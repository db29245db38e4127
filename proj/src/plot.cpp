#include "bseg/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <png.h>

#include "bseg/errors.hpp"

namespace bseg::plot {

namespace {

// Column-major 5x7 glyphs for ASCII 32..126, bit 0 = top row.
const uint8_t kFont[95][5] = {
    {0x00, 0x00, 0x00, 0x00, 0x00}, {0x00, 0x00, 0x5F, 0x00, 0x00},
    {0x00, 0x07, 0x00, 0x07, 0x00}, {0x14, 0x7F, 0x14, 0x7F, 0x14},
    {0x24, 0x2A, 0x7F, 0x2A, 0x12}, {0x23, 0x13, 0x08, 0x64, 0x62},
    {0x36, 0x49, 0x55, 0x22, 0x50}, {0x00, 0x05, 0x03, 0x00, 0x00},
    {0x00, 0x1C, 0x22, 0x41, 0x00}, {0x00, 0x41, 0x22, 0x1C, 0x00},
    {0x08, 0x2A, 0x1C, 0x2A, 0x08}, {0x08, 0x08, 0x3E, 0x08, 0x08},
    {0x00, 0x50, 0x30, 0x00, 0x00}, {0x08, 0x08, 0x08, 0x08, 0x08},
    {0x00, 0x60, 0x60, 0x00, 0x00}, {0x20, 0x10, 0x08, 0x04, 0x02},
    {0x3E, 0x51, 0x49, 0x45, 0x3E}, {0x00, 0x42, 0x7F, 0x40, 0x00},
    {0x42, 0x61, 0x51, 0x49, 0x46}, {0x21, 0x41, 0x45, 0x4B, 0x31},
    {0x18, 0x14, 0x12, 0x7F, 0x10}, {0x27, 0x45, 0x45, 0x45, 0x39},
    {0x3C, 0x4A, 0x49, 0x49, 0x30}, {0x01, 0x71, 0x09, 0x05, 0x03},
    {0x36, 0x49, 0x49, 0x49, 0x36}, {0x06, 0x49, 0x49, 0x29, 0x1E},
    {0x00, 0x36, 0x36, 0x00, 0x00}, {0x00, 0x56, 0x36, 0x00, 0x00},
    {0x00, 0x08, 0x14, 0x22, 0x41}, {0x14, 0x14, 0x14, 0x14, 0x14},
    {0x41, 0x22, 0x14, 0x08, 0x00}, {0x02, 0x01, 0x51, 0x09, 0x06},
    {0x32, 0x49, 0x79, 0x41, 0x3E}, {0x7E, 0x11, 0x11, 0x11, 0x7E},
    {0x7F, 0x49, 0x49, 0x49, 0x36}, {0x3E, 0x41, 0x41, 0x41, 0x22},
    {0x7F, 0x41, 0x41, 0x22, 0x1C}, {0x7F, 0x49, 0x49, 0x49, 0x41},
    {0x7F, 0x09, 0x09, 0x01, 0x01}, {0x3E, 0x41, 0x41, 0x51, 0x32},
    {0x7F, 0x08, 0x08, 0x08, 0x7F}, {0x00, 0x41, 0x7F, 0x41, 0x00},
    {0x20, 0x40, 0x41, 0x3F, 0x01}, {0x7F, 0x08, 0x14, 0x22, 0x41},
    {0x7F, 0x40, 0x40, 0x40, 0x40}, {0x7F, 0x02, 0x04, 0x02, 0x7F},
    {0x7F, 0x04, 0x08, 0x10, 0x7F}, {0x3E, 0x41, 0x41, 0x41, 0x3E},
    {0x7F, 0x09, 0x09, 0x09, 0x06}, {0x3E, 0x41, 0x51, 0x21, 0x5E},
    {0x7F, 0x09, 0x19, 0x29, 0x46}, {0x46, 0x49, 0x49, 0x49, 0x31},
    {0x01, 0x01, 0x7F, 0x01, 0x01}, {0x3F, 0x40, 0x40, 0x40, 0x3F},
    {0x1F, 0x20, 0x40, 0x20, 0x1F}, {0x7F, 0x20, 0x18, 0x20, 0x7F},
    {0x63, 0x14, 0x08, 0x14, 0x63}, {0x03, 0x04, 0x78, 0x04, 0x03},
    {0x61, 0x51, 0x49, 0x45, 0x43}, {0x00, 0x00, 0x7F, 0x41, 0x41},
    {0x02, 0x04, 0x08, 0x10, 0x20}, {0x41, 0x41, 0x7F, 0x00, 0x00},
    {0x04, 0x02, 0x01, 0x02, 0x04}, {0x40, 0x40, 0x40, 0x40, 0x40},
    {0x00, 0x01, 0x02, 0x04, 0x00}, {0x20, 0x54, 0x54, 0x54, 0x78},
    {0x7F, 0x48, 0x44, 0x44, 0x38}, {0x38, 0x44, 0x44, 0x44, 0x20},
    {0x38, 0x44, 0x44, 0x48, 0x7F}, {0x38, 0x54, 0x54, 0x54, 0x18},
    {0x08, 0x7E, 0x09, 0x01, 0x02}, {0x08, 0x14, 0x54, 0x54, 0x3C},
    {0x7F, 0x08, 0x04, 0x04, 0x78}, {0x00, 0x44, 0x7D, 0x40, 0x00},
    {0x20, 0x40, 0x44, 0x3D, 0x00}, {0x00, 0x7F, 0x10, 0x28, 0x44},
    {0x00, 0x41, 0x7F, 0x40, 0x00}, {0x7C, 0x04, 0x18, 0x04, 0x78},
    {0x7C, 0x08, 0x04, 0x04, 0x78}, {0x38, 0x44, 0x44, 0x44, 0x38},
    {0x7C, 0x14, 0x14, 0x14, 0x08}, {0x08, 0x14, 0x14, 0x18, 0x7C},
    {0x7C, 0x08, 0x04, 0x04, 0x08}, {0x48, 0x54, 0x54, 0x54, 0x20},
    {0x04, 0x3F, 0x44, 0x40, 0x20}, {0x3C, 0x40, 0x40, 0x20, 0x7C},
    {0x1C, 0x20, 0x40, 0x20, 0x1C}, {0x3C, 0x40, 0x30, 0x40, 0x3C},
    {0x44, 0x28, 0x10, 0x28, 0x44}, {0x0C, 0x50, 0x50, 0x50, 0x3C},
    {0x44, 0x64, 0x54, 0x4C, 0x44}, {0x00, 0x08, 0x36, 0x41, 0x00},
    {0x00, 0x00, 0x7F, 0x00, 0x00}, {0x00, 0x41, 0x36, 0x08, 0x00},
    {0x08, 0x08, 0x2A, 0x1C, 0x08},
};

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

Canvas::Canvas(int w, int h, Rgb background) : w_(w), h_(h), px_(size_t(w) * h * 3) {
  if (w < 1 || h < 1) throw ValidationError("canvas dimensions must be positive");
  for (int64_t i = 0; i < int64_t(w) * h; ++i) {
    px_[size_t(i) * 3 + 0] = background.r;
    px_[size_t(i) * 3 + 1] = background.g;
    px_[size_t(i) * 3 + 2] = background.b;
  }
}

Rgb Canvas::at(int x, int y) const {
  if (x < 0 || y < 0 || x >= w_ || y >= h_)
    throw ValidationError("pixel read outside the canvas");
  size_t i = (size_t(y) * w_ + x) * 3;
  return {px_[i], px_[i + 1], px_[i + 2]};
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
  size_t i = (size_t(y) * w_ + x) * 3;
  px_[i] = c.r;
  px_[i + 1] = c.g;
  px_[i + 2] = c.b;
}

void Canvas::fill_rect(int x, int y, int w, int h, Rgb c) {
  for (int j = y; j < y + h; ++j)
    for (int i = x; i < x + w; ++i) set(i, j, c);
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) return;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  int cx = x;
  for (char raw : s) {
    unsigned char ch = static_cast<unsigned char>(raw);
    if (ch < 32 || ch > 126) ch = '?';
    const uint8_t* glyph = kFont[ch - 32];
    for (int col = 0; col < 5; ++col)
      for (int row = 0; row < 7; ++row)
        if (glyph[col] & (1u << row))
          fill_rect(cx + col * scale, y + row * scale, scale, scale, c);
    cx += 6 * scale;
  }
}

int Canvas::text_width(const std::string& s, int scale) {
  return int(s.size()) * 6 * scale - (s.empty() ? 0 : scale);
}

void Canvas::save_png(const std::string& path) const {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot create " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw IoError("png writer initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw IoError("png write failed for " + path);
  }

  png_init_io(png, f);
  png_set_IHDR(png, info, png_uint_32(w_), png_uint_32(h_), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h_; ++y)
    png_write_row(png, const_cast<png_bytep>(px_.data() + size_t(y) * w_ * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

Rgb palette(size_t i) {
  static const Rgb colors[] = {
      {31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
      {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127},
  };
  return colors[i % (sizeof(colors) / sizeof(colors[0]))];
}

void line_plot(const std::string& path, const std::string& title, const std::string& x_label,
               const std::string& y_label, const std::vector<Series>& series, int width,
               int height) {
  if (series.empty()) throw ValidationError("line_plot needs at least one series");
  for (const auto& s : series) {
    if (s.x.size() != s.y.size())
      throw ValidationError("series '" + s.name + "' has mismatched x/y lengths");
    if (s.x.empty()) throw ValidationError("series '" + s.name + "' is empty");
  }

  const Rgb bg{255, 255, 255}, frame{60, 60, 60}, grid{225, 225, 225}, ink{20, 20, 20};
  Canvas cv(width, height, bg);

  const int left = 64, right = width - 16, top = 28, bottom = height - 40;

  double xmin = series[0].x[0], xmax = xmin, ymin = series[0].y[0], ymax = ymin;
  for (const auto& s : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (ymax == ymin) {
    double pad = ymin == 0.0 ? 0.5 : std::abs(ymin) * 0.1;
    ymin -= pad;
    ymax += pad;
  } else {
    double pad = (ymax - ymin) * 0.05;
    ymin -= pad;
    ymax += pad;
  }

  auto px = [&](double x) {
    return left + int(std::lround((x - xmin) / (xmax - xmin) * (right - left)));
  };
  auto py = [&](double y) {
    return bottom - int(std::lround((y - ymin) / (ymax - ymin) * (bottom - top)));
  };

  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    double fx = xmin + (xmax - xmin) * t / ticks;
    double fy = ymin + (ymax - ymin) * t / ticks;
    int gx = px(fx), gy = py(fy);
    cv.line(gx, top, gx, bottom, grid);
    cv.line(left, gy, right, gy, grid);
    std::string xl = format_tick(fx);
    cv.text(gx - Canvas::text_width(xl) / 2, bottom + 6, xl, ink);
    std::string yl = format_tick(fy);
    cv.text(left - 6 - Canvas::text_width(yl), gy - 3, yl, ink);
  }

  cv.line(left, top, left, bottom, frame);
  cv.line(left, bottom, right, bottom, frame);
  cv.line(right, top, right, bottom, frame);
  cv.line(left, top, right, top, frame);

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    for (size_t i = 1; i < s.x.size(); ++i)
      cv.line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), s.color);
    if (s.x.size() <= 40)
      for (size_t i = 0; i < s.x.size(); ++i)
        cv.fill_rect(px(s.x[i]) - 1, py(s.y[i]) - 1, 3, 3, s.color);
  }

  cv.text((width - Canvas::text_width(title)) / 2, 8, title, ink);
  cv.text((left + right - Canvas::text_width(x_label)) / 2, height - 14, x_label, ink);
  cv.text(4, 8, y_label, ink);

  int ly = top + 6;
  for (const auto& s : series) {
    int lx = right - 18 - Canvas::text_width(s.name);
    cv.line(lx - 14, ly + 3, lx - 4, ly + 3, s.color);
    cv.text(lx, ly, s.name, ink);
    ly += 11;
  }

  cv.save_png(path);
}

}  // namespace bseg::plot
