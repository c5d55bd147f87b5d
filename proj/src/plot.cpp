#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hda/runner.hpp"

namespace hda {

namespace {

struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        return -1;
    }

    std::vector<double> series(int col) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[col]);
        return out;
    }
};

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("plot: cannot open " + path.string());
    MetricsTable table;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("plot: empty file " + path.string());
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) table.columns.push_back(col);
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str())
                throw std::runtime_error("plot: " + path.string() + " line " + std::to_string(line_no) +
                                         ": not a number: \"" + cell + "\"");
            row.push_back(v);
        }
        if (row.size() != table.columns.size())
            throw std::runtime_error("plot: " + path.string() + " line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(table.columns.size()) +
                                     " cells, got " + std::to_string(row.size()));
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty())
        throw std::runtime_error("plot: " + path.string() + " has no data rows");
    return table;
}

struct Series {
    std::string name;
    std::vector<double> ys;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#17becf", "#7f7f7f"};

std::string format_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<double>& xs, const std::vector<Series>& series) {
    const double width = 640, height = 400;
    const double ml = 64, mr = 16, mt = 36, mb = 44;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = xs.front(), xmax = xs.back();
    double ymin = series[0].ys[0], ymax = ymin;
    for (const auto& s : series)
        for (double y : s.ys) {
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("plot: cannot write " + path.string());
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
        << "  <text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"14\">" << title << "</text>\n";

    // axes and ticks
    out << "  <line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
        << mt + ph << "\" stroke=\"black\"/>\n"
        << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
        << "\" stroke=\"black\"/>\n";
    const int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        const double fx = xmin + (xmax - xmin) * t / ticks;
        const double fy = ymin + (ymax - ymin) * t / ticks;
        out << "  <line x1=\"" << px(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(fx) << "\" y2=\""
            << mt + ph + 4 << "\" stroke=\"black\"/>\n"
            << "  <text x=\"" << px(fx) << "\" y=\"" << mt + ph + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << format_num(fx)
            << "</text>\n"
            << "  <line x1=\"" << ml - 4 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
            << py(fy) << "\" stroke=\"black\"/>\n"
            << "  <text x=\"" << ml - 7 << "\" y=\"" << py(fy) + 3
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << format_num(fy)
            << "</text>\n";
    }
    out << "  <text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">epoch</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % (sizeof kPalette / sizeof *kPalette)];
        const auto& ys = series[si].ys;
        if (xs.size() > 1) {
            out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < xs.size(); ++i)
                out << px(xs[i]) << "," << py(ys[i]) << " ";
            out << "\"/>\n";
        }
        if (xs.size() <= 200) {
            for (std::size_t i = 0; i < xs.size(); ++i)
                out << "  <circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
                    << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        // legend
        const double lx = ml + 10, ly = mt + 12 + 16 * static_cast<double>(si);
        out << "  <line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 18 << "\" y2=\""
            << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
            << "  <text x=\"" << lx + 24 << "\" y=\"" << ly
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[si].name << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("plot: write failed for " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> plot_metrics(const std::filesystem::path& metrics_csv,
                                                const std::filesystem::path& out_dir) {
    const MetricsTable table = read_metrics_csv(metrics_csv);

    const char* required[] = {"epoch",    "l_cls",  "l_trans",       "l_h",
                              "cos_gh",   "kurt_f", "kurt_g",        "kurt_gap",
                              "head_pair_cos", "probe_acc_g", "probe_acc_h", "target_acc"};
    for (const char* col : required)
        if (table.column(col) < 0)
            throw std::runtime_error("plot: " + metrics_csv.string() + " is missing column \"" +
                                     std::string(col) + "\"");

    std::filesystem::create_directories(out_dir);
    const std::vector<double> epochs = table.series(table.column("epoch"));

    auto collect = [&](std::initializer_list<const char*> names) {
        std::vector<Series> out;
        for (const char* n : names) out.push_back({n, table.series(table.column(n))});
        return out;
    };

    std::vector<std::filesystem::path> written;
    auto emit = [&](const char* file, const std::string& title, std::vector<Series> series) {
        const auto path = out_dir / file;
        write_svg_chart(path, title, epochs, series);
        written.push_back(path);
    };

    emit("losses.svg", "training losses", collect({"l_cls", "l_trans", "l_h"}));
    emit("cosine.svg", "cos(G, H)", collect({"cos_gh"}));
    emit("kurtosis.svg", "nongaussianity", collect({"kurt_f", "kurt_g", "kurt_gap"}));
    emit("probe_accuracy.svg", "domain probe accuracy", collect({"probe_acc_g", "probe_acc_h"}));
    emit("target_accuracy.svg", "target accuracy", collect({"target_acc"}));

    std::vector<Series> ranges;
    for (int k = 1;; ++k) {
        const int col = table.column("h_range_" + std::to_string(k));
        if (col < 0) break;
        ranges.push_back({"h_range_" + std::to_string(k), table.series(col)});
    }
    if (!ranges.empty()) emit("heuristic_ranges.svg", "|H^k(x)| ranges", std::move(ranges));

    return written;
}

}  // namespace hda
