#include "percept/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>

namespace percept {

namespace {

struct Rgb {
    double r, g, b;
};

// viridis anchors at u = 0, 1/8, ..., 1
constexpr Rgb kViridis[9] = {
    {68, 1, 84},   {72, 40, 120},  {62, 74, 137},  {49, 104, 142}, {38, 130, 142},
    {31, 158, 137}, {53, 183, 121}, {109, 205, 89}, {253, 231, 37},
};

std::string timestamp_comment() {
    std::time_t now = std::time(nullptr);
    char buf[40];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return std::string("<!-- generated ") + buf + " -->\n";
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Maps a data interval onto pixel coordinates.
struct AxisScale {
    double lo = 0.0, hi = 1.0;
    double px_lo = 0.0, px_hi = 1.0;

    double operator()(double v) const {
        if (hi == lo) return (px_lo + px_hi) / 2.0;
        return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
    }
};

std::vector<double> nice_ticks(double lo, double hi, int want = 5) {
    if (!(hi > lo)) return {lo};
    const double raw = (hi - lo) / want;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) {
        ticks.push_back(t);
    }
    return ticks;
}

void open_svg(std::ostringstream& out, int width, int height) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    out << timestamp_comment();
    out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
}

void draw_axes(std::ostringstream& out, const AxisScale& xs, const AxisScale& ys,
               const std::string& x_label, const std::string& y_label,
               const std::string& title) {
    out << "<line x1=\"" << fmt(xs.px_lo) << "\" y1=\"" << fmt(ys.px_lo) << "\" x2=\""
        << fmt(xs.px_hi) << "\" y2=\"" << fmt(ys.px_lo) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << fmt(xs.px_lo) << "\" y1=\"" << fmt(ys.px_lo) << "\" x2=\""
        << fmt(xs.px_lo) << "\" y2=\"" << fmt(ys.px_hi) << "\" stroke=\"black\"/>\n";
    for (double t : nice_ticks(xs.lo, xs.hi)) {
        const double px = xs(t);
        out << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(ys.px_lo) << "\" x2=\"" << fmt(px)
            << "\" y2=\"" << fmt(ys.px_lo + 5) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(ys.px_lo + 18)
            << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
    }
    for (double t : nice_ticks(ys.lo, ys.hi)) {
        const double py = ys(t);
        out << "<line x1=\"" << fmt(xs.px_lo - 5) << "\" y1=\"" << fmt(py) << "\" x2=\""
            << fmt(xs.px_lo) << "\" y2=\"" << fmt(py) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(xs.px_lo - 8) << "\" y=\"" << fmt(py + 4)
            << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
    }
    const double mid_x = (xs.px_lo + xs.px_hi) / 2.0;
    out << "<text x=\"" << fmt(mid_x) << "\" y=\"" << fmt(ys.px_lo + 36)
        << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"14\" y=\"" << fmt((ys.px_lo + ys.px_hi) / 2.0)
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << fmt((ys.px_lo + ys.px_hi) / 2.0) << ")\">" << y_label << "</text>\n";
    out << "<text x=\"" << fmt(mid_x) << "\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">"
        << title << "</text>\n";
}

}  // namespace

std::string viridis_hex(double u) {
    u = std::clamp(u, 0.0, 1.0);
    const double pos = u * 8.0;
    const int idx = std::min(7, static_cast<int>(pos));
    const double frac = pos - idx;
    const Rgb& a = kViridis[idx];
    const Rgb& b = kViridis[idx + 1];
    const auto mix = [&](double x, double y) {
        return static_cast<int>(std::lround(x + (y - x) * frac));
    };
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b));
    return buf;
}

std::string render_scatter_svg(const std::vector<ScatterPoint>& points,
                               bool color_by_uncertainty, const std::string& x_label,
                               const std::string& y_label, const std::string& title) {
    if (points.empty()) {
        throw std::invalid_argument("render_scatter_svg: no points");
    }
    const int width = 640, height = 520;
    double lo = points.front().truth, hi = lo;
    for (const auto& p : points) {
        lo = std::min({lo, p.truth, p.prediction});
        hi = std::max({hi, p.truth, p.prediction});
    }
    const double pad = (hi - lo) * 0.05 + 1e-12;
    AxisScale xs{lo - pad, hi + pad, 60.0, color_by_uncertainty ? width - 90.0 : width - 20.0};
    AxisScale ys{lo - pad, hi + pad, height - 60.0, 40.0};

    double u_lo = 0.0, u_hi = 0.0;
    if (color_by_uncertainty) {
        u_lo = u_hi = points.front().uncertainty;
        for (const auto& p : points) {
            u_lo = std::min(u_lo, p.uncertainty);
            u_hi = std::max(u_hi, p.uncertainty);
        }
    }

    std::ostringstream out;
    open_svg(out, width, height);
    draw_axes(out, xs, ys, x_label, y_label, title);

    // diagonal ground-truth reference
    out << "<line class=\"ref\" x1=\"" << fmt(xs(xs.lo)) << "\" y1=\"" << fmt(ys(xs.lo))
        << "\" x2=\"" << fmt(xs(xs.hi)) << "\" y2=\"" << fmt(ys(xs.hi))
        << "\" stroke=\"red\" stroke-width=\"1.5\"/>\n";

    for (const auto& p : points) {
        std::string fill = "#3e4a89";
        if (color_by_uncertainty) {
            const double u = (u_hi > u_lo) ? (p.uncertainty - u_lo) / (u_hi - u_lo) : 0.5;
            fill = viridis_hex(u);
        }
        out << "<circle class=\"pt\" cx=\"" << fmt(xs(p.truth)) << "\" cy=\""
            << fmt(ys(p.prediction)) << "\" r=\"2.5\" fill=\"" << fill
            << "\" fill-opacity=\"0.75\"/>\n";
    }

    if (color_by_uncertainty) {
        // vertical color bar
        const double bar_x = width - 62.0, bar_top = 60.0, bar_h = height - 140.0;
        const int strips = 64;
        for (int i = 0; i < strips; ++i) {
            const double u = 1.0 - static_cast<double>(i) / (strips - 1);
            out << "<rect x=\"" << fmt(bar_x) << "\" y=\"" << fmt(bar_top + bar_h * i / strips)
                << "\" width=\"14\" height=\"" << fmt(bar_h / strips + 0.5) << "\" fill=\""
                << viridis_hex(u) << "\"/>\n";
        }
        out << "<text x=\"" << fmt(bar_x + 18) << "\" y=\"" << fmt(bar_top + 4)
            << "\" font-size=\"11\">" << fmt(u_hi) << "</text>\n";
        out << "<text x=\"" << fmt(bar_x + 18) << "\" y=\"" << fmt(bar_top + bar_h)
            << "\" font-size=\"11\">" << fmt(u_lo) << "</text>\n";
        out << "<text x=\"" << fmt(bar_x + 7) << "\" y=\"" << fmt(bar_top - 10)
            << "\" font-size=\"11\" text-anchor=\"middle\">unc.</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::string render_sdm_svg(const SdmCurve& curve, const std::string& title) {
    if (curve.points.empty()) {
        throw std::invalid_argument("render_sdm_svg: empty curve");
    }
    const int width = 640, height = 480;
    double t_lo = curve.points.front().threshold, t_hi = curve.points.back().threshold;
    if (t_hi == t_lo) t_hi = t_lo + 1.0;
    double rms_hi = 0.0;
    for (const auto& p : curve.points) {
        if (p.rms.has_value()) rms_hi = std::max(rms_hi, *p.rms);
    }
    if (rms_hi == 0.0) rms_hi = 1.0;

    AxisScale xs{t_lo, t_hi, 60.0, width - 70.0};
    AxisScale ys_rms{0.0, rms_hi * 1.05, height - 60.0, 40.0};
    AxisScale ys_rej{0.0, 1.0, height - 60.0, 40.0};

    std::ostringstream out;
    open_svg(out, width, height);
    draw_axes(out, xs, ys_rms, "uncertainty threshold", "accepted RMS error", title);

    // right-hand axis for the rejection rate
    out << "<line x1=\"" << fmt(xs.px_hi) << "\" y1=\"" << fmt(ys_rej.px_lo) << "\" x2=\""
        << fmt(xs.px_hi) << "\" y2=\"" << fmt(ys_rej.px_hi) << "\" stroke=\"black\"/>\n";
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        out << "<text x=\"" << fmt(xs.px_hi + 8) << "\" y=\"" << fmt(ys_rej(t) + 4)
            << "\" font-size=\"11\">" << fmt(t) << "</text>\n";
    }
    out << "<text x=\"" << fmt(xs.px_hi + 6) << "\" y=\"30\" font-size=\"11\">rejection</text>\n";

    auto polyline = [&](const std::string& cls, const std::string& color, auto value,
                        const AxisScale& ys) {
        out << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"2\" points=\"";
        bool first = true;
        for (const auto& p : curve.points) {
            const auto v = value(p);
            if (!v.has_value()) continue;
            if (!first) out << ' ';
            out << fmt(xs(p.threshold)) << ',' << fmt(ys(*v));
            first = false;
        }
        out << "\"/>\n";
    };
    polyline("rms", "#3e4a89", [](const SdmPoint& p) { return p.rms; }, ys_rms);
    polyline("rejection", "#35b779",
             [](const SdmPoint& p) { return std::optional<double>(p.rejection_rate); }, ys_rej);

    out << "<rect x=\"80\" y=\"44\" width=\"12\" height=\"4\" fill=\"#3e4a89\"/>"
        << "<text x=\"96\" y=\"50\" font-size=\"11\">accepted RMS</text>\n";
    out << "<rect x=\"200\" y=\"44\" width=\"12\" height=\"4\" fill=\"#35b779\"/>"
        << "<text x=\"216\" y=\"50\" font-size=\"11\">rejection rate</text>\n";
    out << "</svg>\n";
    return out.str();
}

std::string render_rms_table_svg(const std::vector<RunReport>& reports) {
    const int row_h = 22;
    const int width = 760;
    const int height = 70 + row_h * static_cast<int>(reports.size());
    std::ostringstream out;
    open_svg(out, width, height);
    out << "<text x=\"20\" y=\"28\" font-size=\"14\">Model RMS test errors (mean +- std over runs)"
        << "</text>\n";
    const char* headers[] = {"model", "target", "train", "test", "runs", "mean", "std"};
    const double cols[] = {20, 100, 200, 330, 460, 540, 650};
    for (int c = 0; c < 7; ++c) {
        out << "<text x=\"" << cols[c] << "\" y=\"52\" font-size=\"12\" font-weight=\"bold\">"
            << headers[c] << "</text>\n";
    }
    double y = 52;
    for (const auto& r : reports) {
        y += row_h;
        out << "<text class=\"cell\" x=\"" << cols[0] << "\" y=\"" << y << "\" font-size=\"12\">"
            << r.model << "</text>\n";
        out << "<text class=\"cell\" x=\"" << cols[1] << "\" y=\"" << y << "\" font-size=\"12\">"
            << r.target << "</text>\n";
        out << "<text class=\"cell\" x=\"" << cols[2] << "\" y=\"" << y << "\" font-size=\"12\">"
            << r.train_tag << "</text>\n";
        out << "<text class=\"cell\" x=\"" << cols[3] << "\" y=\"" << y << "\" font-size=\"12\">"
            << r.test_tag << "</text>\n";
        out << "<text class=\"cell\" x=\"" << cols[4] << "\" y=\"" << y << "\" font-size=\"12\">"
            << r.completed_runs << "/" << r.requested_runs << "</text>\n";
        out << "<text class=\"cell\" x=\"" << cols[5] << "\" y=\"" << y << "\" font-size=\"12\">"
            << fmt(r.mean_rms) << "</text>\n";
        out << "<text class=\"cell\" x=\"" << cols[6] << "\" y=\"" << y << "\" font-size=\"12\">"
            << fmt(r.std_rms) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace percept
