#include "fasw/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "fasw/error.hpp"
#include "fasw/io.hpp"

namespace fasw::plot {

namespace {

constexpr int kGlyphW = 5, kGlyphH = 7, kAdvance = 6;

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> f{
        {' ', {0, 0, 0, 0, 0, 0, 0}},
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
        {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
        {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
        {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
        {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
        {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}},
        {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
        {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
        {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
        {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
        {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
        {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
        {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
        {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},
        {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},
        {'-', {0, 0, 0, 0x1F, 0, 0, 0}},
        {'+', {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0}},
        {'_', {0, 0, 0, 0, 0, 0, 0x1F}},
        {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
        {'/', {0, 0x01, 0x02, 0x04, 0x08, 0x10, 0}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {'[', {0x0E, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0E}},
        {']', {0x0E, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0E}},
        {'=', {0, 0, 0x1F, 0, 0x1F, 0, 0}},
        {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
        {'^', {0x04, 0x0A, 0x11, 0, 0, 0, 0}},
        {'*', {0, 0x04, 0x15, 0x0E, 0x15, 0x04, 0}},
        {'<', {0x02, 0x04, 0x08, 0x10, 0x08, 0x04, 0x02}},
        {'>', {0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08}},
        {'\'', {0x04, 0x04, 0x08, 0, 0, 0, 0}},
        {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0, 0x04}},
        {'!', {0x04, 0x04, 0x04, 0x04, 0x04, 0, 0x04}},
        {'#', {0x0A, 0x0A, 0x1F, 0x0A, 0x1F, 0x0A, 0x0A}},
    };
    return f;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", std::fabs(v) < 1e-12 ? 0.0 : v);
    return buf;
}

const Color kBlack{0, 0, 0};
const Color kGrid{225, 225, 225};

}  // namespace

Canvas::Canvas(int width, int height, Color background) : w_(width), h_(height) {
    require(width > 0 && height > 0, ErrorKind::input, "canvas must be non-empty");
    px_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < px_.size(); i += 3) {
        px_[i] = background[0];
        px_[i + 1] = background[1];
        px_[i + 2] = background[2];
    }
}

void Canvas::set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
    px_[i] = c[0];
    px_[i + 1] = c[1];
    px_[i + 2] = c[2];
}

Color Canvas::get(int x, int y) const {
    require(x >= 0 && y >= 0 && x < w_ && y < h_, ErrorKind::input, "pixel outside canvas");
    const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
    return {px_[i], px_[i + 1], px_[i + 2]};
}

void Canvas::line(int x0, int y0, int x1, int y1, Color c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
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

void Canvas::fill_rect(int x, int y, int w, int h, Color c) {
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) set(xx, yy, c);
}

void Canvas::text(int x, int y, const std::string& s, Color c, int scale) {
    int cx = x;
    for (char ch : s) {
        const char key = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        auto it = font().find(key);
        for (int row = 0; row < kGlyphH; ++row) {
            for (int col = 0; col < kGlyphW; ++col) {
                const bool on = it != font().end() ? ((it->second[static_cast<std::size_t>(row)] >> (4 - col)) & 1)
                                                   : (row == 0 || row == kGlyphH - 1 || col == 0 || col == kGlyphW - 1);
                if (on) fill_rect(cx + col * scale, y + row * scale, scale, scale, c);
            }
        }
        cx += kAdvance * scale;
    }
}

void Canvas::image(int x, int y, const Tensor& img, int zoom) {
    require(img.rank() == 3 && (img.dim(0) == 1 || img.dim(0) == 3), ErrorKind::input,
            "canvas image must be 1xHxW or 3xHxW, got " + shape_string(img.shape()));
    require(zoom > 0, ErrorKind::input, "zoom must be positive");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
            const std::size_t i = static_cast<std::size_t>(yy) * w + xx;
            const Color col = c == 1 ? Color{to_byte(img[i]), to_byte(img[i]), to_byte(img[i])}
                                     : Color{to_byte(img[i]), to_byte(img[plane + i]), to_byte(img[2 * plane + i])};
            fill_rect(x + xx * zoom, y + yy * zoom, zoom, zoom, col);
        }
}

Tensor Canvas::to_tensor() const {
    Tensor t({3, h_, w_});
    const std::size_t plane = static_cast<std::size_t>(h_) * w_;
    for (std::size_t i = 0; i < plane; ++i)
        for (std::size_t ch = 0; ch < 3; ++ch) t[ch * plane + i] = px_[i * 3 + ch] / 255.0;
    return t;
}

void Canvas::save(const std::filesystem::path& path) const { io::write_png(path, to_tensor()); }

int text_width(const std::string& s, int scale) {
    return s.empty() ? 0 : (static_cast<int>(s.size()) * kAdvance - 1) * scale;
}

AxisRange data_range(const std::vector<Series>& series) {
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : series) {
        require(s.x.size() == s.y.size(), ErrorKind::input, "series '" + s.name + "' has mismatched x/y lengths");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (!std::isfinite(xmin)) return {};
    auto widen = [](double& lo, double& hi) {
        const double span = hi - lo;
        const double pad = span > 0.0 ? 0.05 * span : std::max(0.5, 0.05 * std::fabs(lo));
        lo -= pad;
        hi += pad;
    };
    widen(xmin, xmax);
    widen(ymin, ymax);
    return {xmin, xmax, ymin, ymax};
}

AxisRange render_lines(const LinePlot& p, Canvas& out) {
    const AxisRange r = p.fixed_range ? p.range : data_range(p.series);
    require(r.xmax > r.xmin && r.ymax > r.ymin, ErrorKind::input, "plot range is empty");
    const int left = 56, right = 14, top = 26, bottom = 40;
    const int pw = out.width() - left - right, ph = out.height() - top - bottom;
    require(pw > 10 && ph > 10, ErrorKind::input, "canvas too small for a plot");
    auto px = [&](double x) { return left + static_cast<int>(std::lround((x - r.xmin) / (r.xmax - r.xmin) * pw)); };
    auto py = [&](double y) { return top + ph - static_cast<int>(std::lround((y - r.ymin) / (r.ymax - r.ymin) * ph)); };

    constexpr int kTicks = 5;
    for (int i = 0; i <= kTicks; ++i) {
        const double xv = r.xmin + (r.xmax - r.xmin) * i / kTicks;
        const double yv = r.ymin + (r.ymax - r.ymin) * i / kTicks;
        out.line(px(xv), top, px(xv), top + ph, kGrid);
        out.line(left, py(yv), left + pw, py(yv), kGrid);
        const std::string xl = tick_label(xv), yl = tick_label(yv);
        out.text(px(xv) - text_width(xl) / 2, top + ph + 6, xl, kBlack);
        out.text(left - 6 - text_width(yl), py(yv) - 3, yl, kBlack);
    }
    out.line(left, top, left, top + ph, kBlack);
    out.line(left, top + ph, left + pw, top + ph, kBlack);
    out.text(left + (pw - text_width(p.title, 2)) / 2, 4, p.title, kBlack, 2);
    out.text(left + (pw - text_width(p.x_label)) / 2, out.height() - 14, p.x_label, kBlack);
    out.text(4, top - 12, p.y_label, kBlack);

    for (std::size_t si = 0; si < p.series.size(); ++si) {
        const Series& s = p.series[si];
        const Color col = palette(si);
        bool have_prev = false;
        int prev_x = 0, prev_y = 0;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                have_prev = false;
                continue;
            }
            const int x = px(s.x[i]), y = py(s.y[i]);
            if (have_prev) {
                // Two pixels wide so overlapping curves stay distinguishable.
                out.line(prev_x, prev_y, x, y, col);
                out.line(prev_x + 1, prev_y, x + 1, y, col);
                out.line(prev_x, prev_y + 1, x, y + 1, col);
            }
            const bool isolated = !have_prev && (i + 1 >= s.x.size() || !std::isfinite(s.x[i + 1]) ||
                                                 !std::isfinite(s.y[i + 1]));
            if (isolated) out.fill_rect(x - 2, y - 2, 5, 5, col);
            prev_x = x;
            prev_y = y;
            have_prev = true;
        }
        const int row = static_cast<int>(si);
        const int ly = p.legend_bottom ? top + ph - 6 - (static_cast<int>(p.series.size()) - row) * 11 : top + 6 + row * 11;
        const int lx = left + pw - 8 - text_width(s.name) - 16;
        out.fill_rect(lx, ly + 2, 12, 3, col);
        out.text(lx + 16, ly, s.name, kBlack);
    }
    return r;
}

AxisRange save_line_plot(const std::filesystem::path& path, const LinePlot& p) {
    Canvas c(p.width, p.height);
    const AxisRange r = render_lines(p, c);
    c.save(path);
    return r;
}

void save_image_grid(const std::filesystem::path& path, const std::vector<std::string>& column_titles,
                     const std::vector<std::vector<Tensor>>& rows, int zoom) {
    require(!rows.empty() && !column_titles.empty(), ErrorKind::input, "image grid needs rows and columns");
    const int cols = static_cast<int>(column_titles.size());
    int cell_h = 0, cell_w = 0;
    for (const auto& r : rows) {
        require(static_cast<int>(r.size()) == cols, ErrorKind::input, "image grid row has the wrong number of cells");
        for (const auto& t : r) {
            require(t.rank() == 3, ErrorKind::input, "image grid cells must be C x H x W");
            cell_h = std::max(cell_h, t.dim(1) * zoom);
            cell_w = std::max(cell_w, t.dim(2) * zoom);
        }
    }
    int title_w = 0;
    for (const auto& t : column_titles) title_w = std::max(title_w, text_width(t));
    cell_w = std::max(cell_w, title_w);
    const int gap = 6, header = 16;
    Canvas c(gap + cols * (cell_w + gap), header + gap + static_cast<int>(rows.size()) * (cell_h + gap));
    for (int j = 0; j < cols; ++j) {
        c.text(gap + j * (cell_w + gap), 5, column_titles[static_cast<std::size_t>(j)], kBlack);
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < cols; ++j)
            c.image(gap + j * (cell_w + gap), header + gap + static_cast<int>(i) * (cell_h + gap),
                    rows[i][static_cast<std::size_t>(j)], zoom);
    c.save(path);
}

Color palette(std::size_t i) {
    static const Color colors[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14},
                                   {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {127, 127, 127}};
    return colors[i % (sizeof colors / sizeof colors[0])];
}

}  // namespace fasw::plot
