#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "pxrl/common.hpp"

namespace pxrl {

// Quick-look SVG emitter. Presentation only: every acceptance check reads
// the CSVs, never these files.
class SvgPlot {
public:
    SvgPlot(int width = 640, int height = 400) : w_(width), h_(height) {}

    void add_line(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& color) {
        series_.push_back({xs, ys, color, false});
    }
    void add_scatter(const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& color) {
        series_.push_back({xs, ys, color, true});
    }

    void write(const std::string& path) const {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& s : series_)
            for (size_t i = 0; i < s.xs.size(); ++i) {
                xmin = std::min(xmin, s.xs[i]);
                xmax = std::max(xmax, s.xs[i]);
                ymin = std::min(ymin, s.ys[i]);
                ymax = std::max(ymax, s.ys[i]);
            }
        if (xmin > xmax) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;
        const double pad = 40;
        auto px = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (w_ - 2 * pad); };
        auto py = [&](double y) { return h_ - pad - (y - ymin) / (ymax - ymin) * (h_ - 2 * pad); };

        std::ofstream f(path);
        if (!f) throw IoError("cannot write " + path);
        f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w_ << "' height='" << h_ << "'>\n";
        f << "<rect width='100%' height='100%' fill='white'/>\n";
        for (const auto& s : series_) {
            if (s.scatter) {
                for (size_t i = 0; i < s.xs.size(); ++i)
                    f << "<circle cx='" << px(s.xs[i]) << "' cy='" << py(s.ys[i])
                      << "' r='3' fill='" << s.color << "'/>\n";
            } else {
                f << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
                for (size_t i = 0; i < s.xs.size(); ++i)
                    f << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
                f << "'/>\n";
            }
        }
        f << "</svg>\n";
    }

private:
    struct Series {
        std::vector<double> xs, ys;
        std::string color;
        bool scatter = false;
    };
    int w_, h_;
    std::vector<Series> series_;
};

}  // namespace pxrl
