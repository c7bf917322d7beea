#include "fasw/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "fasw/error.hpp"

namespace fasw::io {

namespace {

std::mutex g_registry_mu;
std::vector<AccessRecorder*> g_recorders;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

AccessRecorder::AccessRecorder() {
    std::lock_guard lock(g_registry_mu);
    g_recorders.push_back(this);
}

AccessRecorder::~AccessRecorder() {
    std::lock_guard lock(g_registry_mu);
    std::erase(g_recorders, this);
}

std::vector<fs::path> AccessRecorder::paths() const {
    std::lock_guard lock(mu_);
    return paths_;
}

std::vector<fs::path> AccessRecorder::under(const fs::path& root) const {
    const fs::path base = fs::weakly_canonical(root);
    std::vector<fs::path> out;
    for (const fs::path& p : paths()) {
        const fs::path c = fs::weakly_canonical(p);
        auto mismatch = std::mismatch(base.begin(), base.end(), c.begin(), c.end());
        if (mismatch.first == base.end()) out.push_back(p);
    }
    return out;
}

void AccessRecorder::note_read(const fs::path& p) {
    std::lock_guard lock(g_registry_mu);
    for (AccessRecorder* r : g_recorders) {
        std::lock_guard inner(r->mu_);
        r->paths_.push_back(p);
    }
}

std::string read_text(const fs::path& p) {
    AccessRecorder::note_read(p);
    std::ifstream in(p, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + p.string());
    out << text;
}

std::vector<char> read_bytes(const fs::path& p) {
    const std::string s = read_text(p);
    return {s.begin(), s.end()};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
    write_text(p, std::string(bytes.begin(), bytes.end()));
}

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Tensor read_png(const fs::path& p) {
    AccessRecorder::note_read(p);
    FilePtr f(std::fopen(p.string().c_str(), "rb"));
    require(f != nullptr, ErrorKind::io, "cannot open " + p.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    require(png && info, ErrorKind::io, "libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::io, "corrupt PNG: " + p.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    std::vector<png_byte> buf(static_cast<std::size_t>(h) * png_get_rowbytes(png, info));
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * png_get_rowbytes(png, info);
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor t({channels, h, w});
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                t[(static_cast<std::size_t>(c) * h + y) * w + x] =
                    rows[static_cast<std::size_t>(y)][x * channels + c] / 255.0;
    return t;
}

void write_png(const fs::path& p, const Tensor& image) {
    require(image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3), ErrorKind::input,
            "write_png expects 1xHxW or 3xHxW, got " + shape_string(image.shape()));
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    FilePtr f(std::fopen(p.string().c_str(), "wb"));
    require(f != nullptr, ErrorKind::io, "cannot write " + p.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    require(png && info, ErrorKind::io, "libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::io, "PNG encode failed: " + p.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                const double v = image[(static_cast<std::size_t>(ch) * h + y) * w + x];
                row[static_cast<std::size_t>(x) * c + ch] =
                    static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string join(const std::vector<std::string>& parts, char delim) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.push_back(delim);
        out += parts[i];
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace fasw::io
