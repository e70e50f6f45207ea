#include <cstdio>
#include <set>

#include "vqs/analysis.hpp"
#include "vqs/binio.hpp"
#include "vqs/errors.hpp"

namespace vqs {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 70, kRight = 470, kTop = 40, kBottom = 420;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Axis {
    double lo, hi;
    double map(double v, double from, double to) const { return from + (v - lo) / (hi - lo) * (to - from); }
};

Axis axis_for(const Matrix& m, std::size_t col) {
    double lo = m(0, col), hi = m(0, col);
    for (std::size_t r = 1; r < m.rows(); ++r) {
        lo = std::min(lo, m(r, col));
        hi = std::max(hi, m(r, col));
    }
    if (hi - lo <= 0.0) return {lo - 1.0, hi + 1.0};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace

std::string render_scatter_svg(const Projection& proj, const std::vector<std::string>& labels,
                               const std::string& title) {
    const auto& xy = proj.coordinates;
    if (xy.rows() == 0) throw ValidationError("scatter: empty projection");
    if (xy.cols() < 2 || proj.explained_ratio.size() < 2) throw ValidationError("scatter: needs 2 components");
    if (labels.size() != xy.rows()) {
        throw ShapeError("scatter: " + std::to_string(xy.rows()) + " points but " + std::to_string(labels.size()) +
                         " labels");
    }
    const std::set<std::string> distinct(labels.begin(), labels.end());
    const std::vector<std::string> names(distinct.begin(), distinct.end());
    const auto groups = encode_groups(labels);
    const Axis ax = axis_for(xy, 0), ay = axis_for(xy, 1);

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
         "\" viewBox=\"0 0 " + fmt(kWidth) + " " + fmt(kHeight) + "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) + "\" fill=\"#ffffff\"/>\n";
    s += "<text x=\"" + fmt((kLeft + kRight) / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + escape(title) + "</text>\n";
    s += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(kRight - kLeft) + "\" height=\"" +
         fmt(kBottom - kTop) + "\" fill=\"none\" stroke=\"#333333\"/>\n";

    auto tick = [&](double x, double y, const char* anchor, double v) {
        s += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" text-anchor=\"" + anchor +
             "\" font-family=\"sans-serif\" font-size=\"10\">" + fmt(v) + "</text>\n";
    };
    tick(kLeft, kBottom + 14, "start", ax.lo);
    tick(kRight, kBottom + 14, "end", ax.hi);
    tick(kLeft - 4, kBottom, "end", ay.lo);
    tick(kLeft - 4, kTop + 8, "end", ay.hi);

    auto axis_label = [](const char* name, double ratio) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%s (%.1f%%)", name, 100.0 * ratio);
        return std::string(buf);
    };
    const std::string xlabel = axis_label("PC1", proj.explained_ratio[0]);
    const std::string ylabel = axis_label("PC2", proj.explained_ratio[1]);
    s += "<text x=\"" + fmt((kLeft + kRight) / 2) + "\" y=\"" + fmt(kBottom + 34) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xlabel + "</text>\n";
    s += "<text x=\"18\" y=\"" + fmt((kTop + kBottom) / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 18 " + fmt((kTop + kBottom) / 2) + ")\">" + ylabel + "</text>\n";

    s += "<g id=\"points\">\n";
    for (std::size_t i = 0; i < xy.rows(); ++i) {
        const double px = ax.map(xy(i, 0), kLeft, kRight);
        const double py = ay.map(xy(i, 1), kBottom, kTop);
        s += "<circle cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) + "\" r=\"3.00\" fill=\"" +
             kPalette[groups[i] % std::size(kPalette)] + "\" fill-opacity=\"0.75\"/>\n";
    }
    s += "</g>\n<g id=\"legend\">\n";
    for (std::size_t g = 0; g < names.size(); ++g) {
        const double y = kTop + 10 + 20.0 * static_cast<double>(g);
        s += "<rect class=\"legend-key\" x=\"" + fmt(kRight + 20) + "\" y=\"" + fmt(y - 9) +
             "\" width=\"10.00\" height=\"10.00\" fill=\"" + kPalette[g % std::size(kPalette)] + "\"/>\n";
        s += "<text x=\"" + fmt(kRight + 36) + "\" y=\"" + fmt(y) +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + escape(names[g]) + "</text>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

void emit_scatter(const Projection& proj, const std::vector<std::string>& labels, const std::string& title,
                  const std::filesystem::path& path) {
    write_text_atomic(path, render_scatter_svg(proj, labels, title));
}

}  // namespace vqs
