#include "faceaudit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace faceaudit::svg {

namespace {

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
};

Csv read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    Csv csv;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.emplace_back();
        if (first) {
            csv.header = std::move(fields);
            first = false;
        } else {
            csv.rows.push_back(std::move(fields));
        }
    }
    if (first) throw Error(ErrorKind::corrupt_file, "empty CSV: " + path.string());
    return csv;
}

double to_double(const std::string& s, const std::filesystem::path& path) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::corrupt_file, "malformed number \"" + s + "\" in " + path.string());
    }
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

class Canvas {
public:
    Canvas(double w, double h) : w_(w), h_(h) {}

    void comment(const std::string& text) {
        body_ << "<!-- " << text << " -->\n";
    }
    void rect(double x, double y, double w, double h, const std::string& fill,
              double opacity = 1.0) {
        body_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w)
              << "\" height=\"" << fmt(h) << "\" fill=\"" << fill << '"';
        if (opacity != 1.0) body_ << " fill-opacity=\"" << fmt(opacity) << '"';
        body_ << "/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width = 1.0) {
        body_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
              << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
              << fmt(width) << "\"/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double width = 1.5) {
        body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
              << fmt(width) << "\" points=\"";
        for (const auto& [x, y] : pts) body_ << fmt(x) << ',' << fmt(y) << ' ';
        body_ << "\"/>\n";
    }
    void text(double x, double y, const std::string& s, int size = 12,
              const std::string& anchor = "start") {
        body_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y)
              << "\" font-family=\"sans-serif\" font-size=\"" << size << "\" text-anchor=\""
              << anchor << "\">" << s << "</text>\n";
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w_) << "\" height=\""
            << fmt(h_) << "\" viewBox=\"0 0 " << fmt(w_) << ' ' << fmt(h_) << "\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body_.str() << "</svg>\n";
    }

private:
    double w_, h_;
    std::ostringstream body_;
};

struct Frame {
    double x0, y0, x1, y1;  // plot area in canvas coordinates (y down)
    double xmin, xmax, ymin, ymax;

    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * (x1 - x0); }
    double py(double y) const { return y1 - (y - ymin) / (ymax - ymin) * (y1 - y0); }
};

void draw_axes(Canvas& canvas, const Frame& f, const std::string& xlabel,
               const std::string& ylabel) {
    canvas.line(f.x0, f.y1, f.x1, f.y1, "#333333");
    canvas.line(f.x0, f.y0, f.x0, f.y1, "#333333");
    canvas.text(f.x0, f.y1 + 16, fmt(f.xmin), 10);
    canvas.text(f.x1, f.y1 + 16, fmt(f.xmax), 10, "end");
    canvas.text(f.x0 - 4, f.y1, fmt(f.ymin), 10, "end");
    canvas.text(f.x0 - 4, f.y0 + 8, fmt(f.ymax), 10, "end");
    canvas.text((f.x0 + f.x1) / 2, f.y1 + 32, xlabel, 12, "middle");
    canvas.text(f.x0 - 36, (f.y0 + f.y1) / 2, ylabel, 12, "middle");
}

void no_data(Canvas& canvas, double w, double h) {
    canvas.text(w / 2, h / 2, "no data", 18, "middle");
}

void render_hist_overlay(const Csv& csv, const std::filesystem::path& csv_path, Canvas& canvas,
                         const PlotOptions& opts) {
    const int c_series = csv.column("series");
    const int c_group = csv.column("group");
    const int c_lo = csv.column("bin_lo");
    const int c_hi = csv.column("bin_hi");
    const int c_count = csv.column("count");
    if (c_group < 0 || c_lo < 0 || c_hi < 0 || c_count < 0) {
        throw Error(ErrorKind::corrupt_file, "histogram CSV needs group,bin_lo,bin_hi,count");
    }
    struct Bin {
        double lo, hi, count;
    };
    std::map<std::string, std::vector<Bin>> series;
    for (const auto& row : csv.rows) {
        std::string key = row[static_cast<std::size_t>(c_group)];
        if (c_series >= 0) key = row[static_cast<std::size_t>(c_series)] + "/" + key;
        series[key].push_back({to_double(row[static_cast<std::size_t>(c_lo)], csv_path),
                               to_double(row[static_cast<std::size_t>(c_hi)], csv_path),
                               to_double(row[static_cast<std::size_t>(c_count)], csv_path)});
    }
    if (series.empty()) {
        no_data(canvas, 640, 420);
        return;
    }
    double xmin = 1e300, xmax = -1e300, ymax = 0.0;
    std::map<std::string, double> totals;
    for (auto& [key, bins] : series) {
        double total = 0.0;
        for (const auto& b : bins) total += b.count;
        totals[key] = total > 0 ? total : 1.0;
        for (const auto& b : bins) {
            xmin = std::min(xmin, b.lo);
            xmax = std::max(xmax, b.hi);
            ymax = std::max(ymax, b.count / totals[key]);
        }
    }
    if (!(xmax > xmin)) { xmin -= 0.5; xmax += 0.5; }
    if (ymax <= 0.0) ymax = 1.0;
    const Frame f{60, 40, 600, 370, xmin, xmax, 0.0, ymax * 1.05};
    draw_axes(canvas, f, "score", "fraction");
    int color = 0;
    double legend_y = f.y0 + 8;
    for (const auto& [key, bins] : series) {
        const std::string& c = kPalette[color % 8];
        std::vector<std::pair<double, double>> pts;
        for (const auto& b : bins) {
            const double density = b.count / totals[key];
            pts.emplace_back(f.px(b.lo), f.py(density));
            pts.emplace_back(f.px(b.hi), f.py(density));
            canvas.rect(f.px(b.lo), f.py(density), f.px(b.hi) - f.px(b.lo),
                        f.y1 - f.py(density), c, 0.25);
        }
        canvas.polyline(pts, c, 1.2);
        canvas.rect(f.x1 - 130, legend_y - 9, 10, 10, c);
        canvas.text(f.x1 - 115, legend_y, key, 11);
        legend_y += 16;
        ++color;
    }
    if (!opts.title.empty()) canvas.text(320, 24, opts.title, 14, "middle");
}

std::string heat_color(double t) {
    // white -> dark blue
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(255 - t * (255 - 8)));
    const int g = static_cast<int>(std::lround(255 - t * (255 - 48)));
    const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

std::string diverging_color(double t) {
    // t in [-1,1]: negative -> red (less face for males), 0 -> white,
    // positive -> blue, matching the male-minus-female convention.
    t = std::clamp(t, -1.0, 1.0);
    int r = 255, g = 255, b = 255;
    if (t > 0) {
        r = static_cast<int>(std::lround(255 - t * (255 - 33)));
        g = static_cast<int>(std::lround(255 - t * (255 - 102)));
        b = static_cast<int>(std::lround(255 - t * (255 - 172)));
    } else if (t < 0) {
        const double a = -t;
        r = static_cast<int>(std::lround(255 - a * (255 - 178)));
        g = static_cast<int>(std::lround(255 - a * (255 - 24)));
        b = static_cast<int>(std::lround(255 - a * (255 - 43)));
    }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

void render_grid(const Csv& csv, const std::filesystem::path& csv_path, bool diverging,
                 const PlotOptions& opts, const std::filesystem::path& out_svg) {
    const int c_row = csv.column("row");
    const int c_col = csv.column("col");
    const int c_value = csv.column("value");
    if (c_row < 0 || c_col < 0 || c_value < 0) {
        throw Error(ErrorKind::corrupt_file, "heatmap CSV needs row,col,value");
    }
    long max_row = -1, max_col = -1;
    struct Cell { long r, c; double v; };
    std::vector<Cell> cells;
    cells.reserve(csv.rows.size());
    for (const auto& row : csv.rows) {
        const long r = std::lround(to_double(row[static_cast<std::size_t>(c_row)], csv_path));
        const long c = std::lround(to_double(row[static_cast<std::size_t>(c_col)], csv_path));
        const double v = to_double(row[static_cast<std::size_t>(c_value)], csv_path);
        cells.push_back({r, c, v});
        max_row = std::max(max_row, r);
        max_col = std::max(max_col, c);
    }
    const double margin = 24;
    if (cells.empty()) {
        Canvas canvas(320, 240);
        if (!opts.provenance.empty()) canvas.comment(opts.provenance);
        no_data(canvas, 320, 240);
        canvas.save(out_svg);
        return;
    }
    const double cell_px = std::max(2.0, std::floor(560.0 / static_cast<double>(
                                                    std::max(max_row, max_col) + 1)));
    const double w = margin * 2 + cell_px * static_cast<double>(max_col + 1);
    const double h = margin * 2 + cell_px * static_cast<double>(max_row + 1) + 20;
    Canvas canvas(w, h);
    if (!opts.provenance.empty()) canvas.comment(opts.provenance);
    double vmax = 0.0;
    if (diverging) {
        for (const auto& c : cells) vmax = std::max(vmax, std::abs(c.v));
        if (vmax == 0.0) vmax = 1.0;
    }
    for (const auto& cell : cells) {
        const std::string color = diverging ? diverging_color(cell.v / vmax)
                                            : heat_color(cell.v);
        canvas.rect(margin + cell_px * static_cast<double>(cell.c),
                    margin + cell_px * static_cast<double>(cell.r), cell_px, cell_px, color);
    }
    if (!opts.title.empty()) canvas.text(w / 2, 16, opts.title, 13, "middle");
    if (diverging) {
        canvas.text(margin, h - 8,
                    "blue: value &gt; 0 (more male), red: value &lt; 0 (more female), max |v| = " +
                        fmt(vmax), 10);
    } else {
        canvas.text(margin, h - 8, "white: 0, blue: 1", 10);
    }
    canvas.save(out_svg);
}

void render_curve(const Csv& csv, const std::filesystem::path& csv_path, Canvas& canvas,
                  const PlotOptions& opts) {
    const int c_group = csv.column("group");
    const int c_index = csv.column("component_index");
    const int c_frac = csv.column("cumulative_fraction");
    if (c_group < 0 || c_index < 0 || c_frac < 0) {
        throw Error(ErrorKind::corrupt_file,
                    "curve CSV needs group,component_index,cumulative_fraction");
    }
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    double xmax = 1.0;
    for (const auto& row : csv.rows) {
        const double x = to_double(row[static_cast<std::size_t>(c_index)], csv_path);
        const double y = to_double(row[static_cast<std::size_t>(c_frac)], csv_path);
        series[row[static_cast<std::size_t>(c_group)]].emplace_back(x, y);
        xmax = std::max(xmax, x);
    }
    if (series.empty()) {
        no_data(canvas, 640, 420);
        return;
    }
    const Frame f{60, 40, 600, 370, 0.0, xmax, 0.0, 1.0};
    draw_axes(canvas, f, "components", "cumulative variance fraction");
    int color = 0;
    double legend_y = f.y1 - 14 * static_cast<double>(series.size());
    for (auto& [key, pts] : series) {
        std::sort(pts.begin(), pts.end());
        const std::string& c = kPalette[color % 8];
        std::vector<std::pair<double, double>> path;
        path.reserve(pts.size());
        for (const auto& [x, y] : pts) path.emplace_back(f.px(x), f.py(y));
        canvas.polyline(path, c);
        canvas.rect(f.x1 - 130, legend_y - 9, 10, 10, c);
        canvas.text(f.x1 - 115, legend_y, key, 11);
        legend_y += 16;
        ++color;
    }
    if (!opts.title.empty()) canvas.text(320, 24, opts.title, 14, "middle");
}

}  // namespace

void render_csv(const std::string& kind, const std::filesystem::path& csv_path,
                const std::filesystem::path& out_svg, const PlotOptions& opts) {
    const Csv csv = read_csv(csv_path);
    PlotOptions effective = opts;
    if (effective.provenance.empty()) {
        effective.provenance = "faceaudit plot kind=" + kind + " source=" +
                               csv_path.filename().string();
    }
    if (kind == "heatmap" || kind == "diff-heatmap") {
        render_grid(csv, csv_path, kind == "diff-heatmap", effective, out_svg);
        return;
    }
    Canvas canvas(640, 420);
    canvas.comment(effective.provenance);
    if (kind == "hist-overlay") {
        render_hist_overlay(csv, csv_path, canvas, effective);
    } else if (kind == "curve") {
        render_curve(csv, csv_path, canvas, effective);
    } else {
        throw Error(ErrorKind::invalid_input, "unknown plot kind: " + kind);
    }
    canvas.save(out_svg);
}

}  // namespace faceaudit::svg
