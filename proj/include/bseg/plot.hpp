#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bseg::plot {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
};

/// RGB8 raster with clipped primitives and a built-in 5x7 bitmap font.
class Canvas {
 public:
  Canvas(int w, int h, Rgb background);

  int width() const { return w_; }
  int height() const { return h_; }
  const std::vector<uint8_t>& pixels() const { return px_; }
  Rgb at(int x, int y) const;

  void set(int x, int y, Rgb c);
  void fill_rect(int x, int y, int w, int h, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  static int text_width(const std::string& s, int scale = 1);

  void save_png(const std::string& path) const;

 private:
  int w_, h_;
  std::vector<uint8_t> px_;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  Rgb color;
};

/// Line chart with a framed plot area, tick labels, and a legend. Output is
/// fully deterministic for identical inputs.
void line_plot(const std::string& path, const std::string& title, const std::string& x_label,
               const std::string& y_label, const std::vector<Series>& series, int width = 640,
               int height = 420);

/// Distinct line color for the i-th series of a chart.
Rgb palette(size_t i);

}  // namespace bseg::plot
