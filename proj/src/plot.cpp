#include "cromo/plot.hpp"

#include "cromo/error.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

namespace cromo::plot {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

// 5x7 bitmap glyphs, one byte per row, bit 4 is the leftmost column.
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> f = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
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
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
        {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
        {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}}, {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}}, {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
        {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}}, {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
        {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}}, {'*', {0x00, 0x04, 0x15, 0x0E, 0x15, 0x04, 0x00}},
    };
    return f;
}

const Rgb kPalette[] = {{31, 119, 180}, {214, 39, 40},  {44, 160, 44},  {255, 127, 14},
                        {148, 103, 189}, {140, 86, 75}, {227, 119, 194}, {23, 190, 207}};

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w * h * 3), 255) {}

    void set(int x, int y, Rgb c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        std::copy(c.begin(), c.end(), px_.begin() + 3 * (static_cast<std::ptrdiff_t>(y) * w_ + x));
    }
    void rect(int x0, int y0, int x1, int y1, Rgb c) {
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) set(x, y, c);
    }
    void line(int x0, int y0, int x1, int y1, Rgb c, int thick = 1) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            rect(x0 - thick / 2, y0 - thick / 2, x0 + (thick - 1) / 2, y0 + (thick - 1) / 2, c);
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
    // Text with its top-left corner at (x, y); unknown glyphs render blank.
    void text(int x, int y, const std::string& s, Rgb c) {
        for (char raw : s) {
            const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
            auto it = font().find(ch);
            if (it != font().end())
                for (int r = 0; r < 7; ++r)
                    for (int col = 0; col < 5; ++col)
                        if (it->second[static_cast<std::size_t>(r)] & (0x10 >> col)) set(x + col, y + r, c);
            x += 6;
        }
    }
    static int text_width(const std::string& s) { return 6 * static_cast<int>(s.size()); }

    void save(const std::filesystem::path& path) const {
        const auto tmp = path.string() + ".tmp";
        FILE* f = std::fopen(tmp.c_str(), "wb");
        if (!f) throw RuntimeError("plot: cannot write '" + tmp + "'");
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info || setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            std::fclose(f);
            std::filesystem::remove(tmp);
            throw RuntimeError("plot: libpng failure writing '" + path.string() + "'");
        }
        png_init_io(png, f);
        png_set_IHDR(png, info, static_cast<png_uint_32>(w_), static_cast<png_uint_32>(h_), 8, PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < h_; ++y)
            png_write_row(png, const_cast<png_bytep>(px_.data() + 3 * static_cast<std::ptrdiff_t>(y) * w_));
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
        if (std::fclose(f) != 0) throw RuntimeError("plot: write failure on '" + tmp + "'");
        std::filesystem::rename(tmp, path);
    }

private:
    int w_, h_;
    std::vector<std::uint8_t> px_;
};

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace

void write_line_plot(const std::filesystem::path& path, const PlotSpec& spec, const std::vector<Series>& series) {
    require(!series.empty(), "plot: no series");
    require(spec.width >= 200 && spec.height >= 150, "plot: canvas too small");
    double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
    for (const auto& s : series) {
        require(s.x.size() == s.y.size() && !s.x.empty(), "plot: series '" + s.label + "' is empty or ragged");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            require(std::isfinite(s.x[i]) && std::isfinite(s.y[i]), "plot: non-finite point in '" + s.label + "'");
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    if (spec.y_min) y_lo = *spec.y_min;
    if (spec.y_max) y_hi = *spec.y_max;
    if (x_hi <= x_lo) x_hi = x_lo + 1;
    if (y_hi <= y_lo) y_hi = y_lo + 1;

    std::size_t legend_chars = 0;
    for (const auto& s : series) legend_chars = std::max(legend_chars, s.label.size());
    const int left = 56, top = 28, bottom = 40;
    const int right = 24 + 16 + Canvas::text_width(std::string(legend_chars, ' '));
    const int pw = spec.width - left - right, ph = spec.height - top - bottom;
    require(pw > 40 && ph > 40, "plot: labels leave no room for the plot area");

    Canvas c(spec.width, spec.height);
    const Rgb ink{0, 0, 0}, grid{225, 225, 225};
    auto to_px = [&](double x, double y) {
        return std::pair<int, int>{left + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * pw)),
                                   top + ph - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * ph))};
    };
    for (int k = 0; k <= 4; ++k) {
        const int gy = top + ph - ph * k / 4, gx = left + pw * k / 4;
        c.line(left, gy, left + pw, gy, grid);
        c.line(gx, top, gx, top + ph, grid);
        const std::string yl = tick_label(y_lo + (y_hi - y_lo) * k / 4.0);
        c.text(left - 6 - Canvas::text_width(yl), gy - 3, yl, ink);
        const std::string xl = tick_label(x_lo + (x_hi - x_lo) * k / 4.0);
        c.text(gx - Canvas::text_width(xl) / 2, top + ph + 6, xl, ink);
    }
    c.line(left, top, left, top + ph, ink);
    c.line(left, top + ph, left + pw, top + ph, ink);
    c.text(left + (pw - Canvas::text_width(spec.title)) / 2, 8, spec.title, ink);
    c.text(left + (pw - Canvas::text_width(spec.x_label)) / 2, top + ph + 22, spec.x_label, ink);
    c.text(4, top - 14, spec.y_label, ink);

    for (std::size_t k = 0; k < series.size(); ++k) {
        const Rgb col = kPalette[k % std::size(kPalette)];
        const auto& s = series[k];
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const auto [px, py] = to_px(s.x[i], s.y[i]);
            c.rect(px - 2, py - 2, px + 2, py + 2, col);
            if (i > 0) {
                const auto [qx, qy] = to_px(s.x[i - 1], s.y[i - 1]);
                c.line(qx, qy, px, py, col, 2);
            }
        }
        const int ly = top + 4 + 14 * static_cast<int>(k);
        c.rect(left + pw + 16, ly, left + pw + 26, ly + 6, col);
        c.text(left + pw + 32, ly, s.label, ink);
    }
    c.save(path);
}

}  // namespace cromo::plot
