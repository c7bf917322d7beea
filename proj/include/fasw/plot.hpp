#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fasw/tensor.hpp"

namespace fasw::plot {

using Color = std::array<std::uint8_t, 3>;

/// RGB raster with a built-in 5x7 bitmap font. Origin is the top-left pixel.
class Canvas {
public:
    Canvas(int width, int height, Color background = {255, 255, 255});

    int width() const { return w_; }
    int height() const { return h_; }
    void set(int x, int y, Color c);
    Color get(int x, int y) const;
    void line(int x0, int y0, int x1, int y1, Color c);
    void fill_rect(int x, int y, int w, int h, Color c);
    /// Draws text with the top-left corner at (x, y); `scale` multiplies the glyph size.
    void text(int x, int y, const std::string& s, Color c, int scale = 1);
    /// Blits a C x H x W image in [0,1] (C = 1 or 3), nearest-neighbour scaled by `zoom`.
    void image(int x, int y, const Tensor& img, int zoom = 1);

    /// 3 x H x W tensor in [0,1].
    Tensor to_tensor() const;
    void save(const std::filesystem::path& path) const;

private:
    int w_, h_;
    std::vector<std::uint8_t> px_;
};

/// Pixel width of `s` at the given scale.
int text_width(const std::string& s, int scale = 1);

struct AxisRange {
    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;

    bool contains(double x, double y) const { return x >= xmin && x <= xmax && y >= ymin && y <= ymax; }
};

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    /// Fixed axes (e.g. [0,1]^2 for ROC); otherwise derived from the data.
    bool fixed_range = false;
    AxisRange range;
    /// Legend in the lower-right corner instead of the upper-right.
    bool legend_bottom = false;
    int width = 480;
    int height = 360;
};

/// Smallest padded range holding every finite point; degenerate spans are widened.
AxisRange data_range(const std::vector<Series>& series);

/// Renders the plot and returns the axis range actually used.
AxisRange render_lines(const LinePlot& p, Canvas& out);
AxisRange save_line_plot(const std::filesystem::path& path, const LinePlot& p);

/// Grid of images: rows[r][c] is a C x H x W tensor in [0,1]; every cell of
/// a column shares the column title.
void save_image_grid(const std::filesystem::path& path, const std::vector<std::string>& column_titles,
                     const std::vector<std::vector<Tensor>>& rows, int zoom = 3);

Color palette(std::size_t i);

}  // namespace fasw::plot
