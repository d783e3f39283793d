#include "slicesec/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "slicesec/util.hpp"

namespace slicesec::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 55;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                         "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

struct Bounds {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
};

Bounds compute_bounds(const std::vector<Series>& series) {
    Bounds b;
    b.xmin = b.ymin = std::numeric_limits<double>::infinity();
    b.xmax = b.ymax = -std::numeric_limits<double>::infinity();
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            b.xmin = std::min(b.xmin, x);
            b.xmax = std::max(b.xmax, x);
            b.ymin = std::min(b.ymin, y);
            b.ymax = std::max(b.ymax, y);
        }
    if (!std::isfinite(b.xmin)) b = {0, 1, 0, 1};
    if (b.xmax == b.xmin) {
        b.xmin -= 0.5;
        b.xmax += 0.5;
    }
    if (b.ymax == b.ymin) {
        b.ymin -= 0.5;
        b.ymax += 0.5;
    }
    return b;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

class ChartWriter {
public:
    ChartWriter(const std::string& title, const std::string& x_label, const std::string& y_label,
                const std::vector<Series>& series)
        : bounds_(compute_bounds(series)) {
        out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
             << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
        out_ << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
        out_ << "<text x=\"" << kWidth / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\""
             << " text-anchor=\"middle\">" << title << "</text>\n";
        axes(x_label, y_label);
    }

    double px(double x) const {
        return kMarginLeft + (x - bounds_.xmin) / (bounds_.xmax - bounds_.xmin) *
                                 (kWidth - kMarginLeft - kMarginRight);
    }
    double py(double y) const {
        return kHeight - kMarginBottom - (y - bounds_.ymin) / (bounds_.ymax - bounds_.ymin) *
                                             (kHeight - kMarginTop - kMarginBottom);
    }

    void axes(const std::string& x_label, const std::string& y_label) {
        out_ << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\""
             << kWidth - kMarginLeft - kMarginRight << "\" height=\""
             << kHeight - kMarginTop - kMarginBottom
             << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
        for (int i = 0; i <= 4; ++i) {
            double fx = bounds_.xmin + (bounds_.xmax - bounds_.xmin) * i / 4.0;
            double fy = bounds_.ymin + (bounds_.ymax - bounds_.ymin) * i / 4.0;
            out_ << "<text x=\"" << num(px(fx)) << "\" y=\"" << kHeight - kMarginBottom + 18
                 << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(fx)
                 << "</text>\n";
            out_ << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << num(py(fy) + 4)
                 << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(fy)
                 << "</text>\n";
            out_ << "<line x1=\"" << kMarginLeft << "\" y1=\"" << num(py(fy)) << "\" x2=\""
                 << kWidth - kMarginRight << "\" y2=\"" << num(py(fy))
                 << "\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n";
        }
        out_ << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
             << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" << x_label
             << "</text>\n";
        out_ << "<text x=\"18\" y=\"" << kHeight / 2
             << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\""
             << " transform=\"rotate(-90 18 " << kHeight / 2 << ")\">" << y_label << "</text>\n";
    }

    void legend(const std::vector<Series>& series) {
        if (series.size() < 2) return;
        int y = kMarginTop + 14;
        for (std::size_t i = 0; i < series.size(); ++i) {
            const char* color = kColors[i % 8];
            out_ << "<rect x=\"" << kMarginLeft + 10 << "\" y=\"" << y - 9
                 << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n";
            out_ << "<text x=\"" << kMarginLeft + 28 << "\" y=\"" << y
                 << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[i].name
                 << "</text>\n";
            y += 16;
        }
    }

    void polyline(const Series& s, std::size_t idx) {
        if (s.points.empty()) return;
        out_ << "<polyline fill=\"none\" stroke=\"" << kColors[idx % 8]
             << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : s.points) out_ << num(px(x)) << "," << num(py(y)) << " ";
        out_ << "\"/>\n";
    }

    void dots(const Series& s, std::size_t idx) {
        for (const auto& [x, y] : s.points)
            out_ << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y))
                 << "\" r=\"2\" fill=\"" << kColors[idx % 8] << "\" fill-opacity=\"0.6\"/>\n";
    }

    std::string finish() {
        out_ << "</svg>\n";
        return out_.str();
    }

private:
    Bounds bounds_;
    std::ostringstream out_;
};

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
    ChartWriter w(title, x_label, y_label, series);
    for (std::size_t i = 0; i < series.size(); ++i) w.polyline(series[i], i);
    w.legend(series);
    write_file_atomic(path, w.finish());
}

void write_scatter_chart(const std::filesystem::path& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<Series>& series) {
    ChartWriter w(title, x_label, y_label, series);
    for (std::size_t i = 0; i < series.size(); ++i) w.dots(series[i], i);
    w.legend(series);
    write_file_atomic(path, w.finish());
}

}  // namespace slicesec::svg
