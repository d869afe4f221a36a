#include "riglab/svg_plot.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace riglab {
namespace {

struct Bounds {
  double lo_x = 0.0, hi_x = 1.0, lo_y = 0.0, hi_y = 1.0;

  void include(double x, double y) {
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  }

  static Bounds empty() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    Bounds b;
    b.lo_x = b.lo_y = inf;
    b.hi_x = b.hi_y = -inf;
    return b;
  }

  // Guarantees a positive extent so the pixel mapping never divides by zero.
  void pad() {
    if (hi_x - lo_x < 1e-9) {
      lo_x -= 0.5;
      hi_x += 0.5;
    }
    if (hi_y - lo_y < 1e-9) {
      lo_y -= 0.5;
      hi_y += 0.5;
    }
    const double mx = 0.05 * (hi_x - lo_x);
    const double my = 0.05 * (hi_y - lo_y);
    lo_x -= mx;
    hi_x += mx;
    lo_y -= my;
    hi_y += my;
  }
};

struct Panel {
  double px = 0.0, py = 0.0, pw = 1.0, ph = 1.0;  // pixel rectangle
  Bounds bounds;

  double map_x(double x) const {
    return px + (x - bounds.lo_x) / (bounds.hi_x - bounds.lo_x) * pw;
  }
  // SVG y grows downward.
  double map_y(double y) const {
    return py + ph - (y - bounds.lo_y) / (bounds.hi_y - bounds.lo_y) * ph;
  }
};

template <typename GetXY>
std::string polyline(const Panel& panel, int n, const GetXY& get,
                     const char* color) {
  std::string points;
  char buf[64];
  for (int i = 0; i < n; ++i) {
    const auto [x, y] = get(i);
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", panel.map_x(x),
                  panel.map_y(y));
    points += buf;
  }
  return "<polyline fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
}

std::string panel_frame(const Panel& p, const std::string& label) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                "fill=\"none\" stroke=\"#888\"/>\n"
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" "
                "font-family=\"monospace\">%s</text>\n",
                p.px, p.py, p.pw, p.ph, p.px, p.py - 6.0, label.c_str());
  return buf;
}

std::string axis_labels(const Panel& p) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" "
                "font-family=\"monospace\">%.3g</text>\n"
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" "
                "font-family=\"monospace\">%.3g</text>\n"
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" "
                "font-family=\"monospace\">%.3g</text>\n"
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" "
                "font-family=\"monospace\">%.3g</text>\n",
                p.px + 2.0, p.py + p.ph + 12.0, p.bounds.lo_x,
                p.px + p.pw - 30.0, p.py + p.ph + 12.0, p.bounds.hi_x,
                p.px - 2.0 - 34.0, p.py + p.ph - 2.0, p.bounds.lo_y,
                p.px - 2.0 - 34.0, p.py + 10.0, p.bounds.hi_y);
  return buf;
}

}  // namespace

void write_trajectory_svg(const std::filesystem::path& file,
                          const Trajectory& estimate,
                          const Trajectory& ground_truth,
                          const std::vector<ScanError>& errors,
                          const SvgPlotOptions& options) {
  if (estimate.empty() || ground_truth.empty()) {
    throw std::invalid_argument("write_trajectory_svg: empty trajectory");
  }
  if (options.width < 200 || options.height < 120) {
    throw std::invalid_argument("write_trajectory_svg: canvas too small");
  }

  const double w = options.width;
  const double h = options.height;
  Panel top_down;
  top_down.px = 0.06 * w;
  top_down.py = 0.10 * h;
  top_down.pw = 0.40 * w;
  top_down.ph = 0.80 * h;
  top_down.bounds = Bounds::empty();
  for (const auto& tp : ground_truth) {
    top_down.bounds.include(tp.pose.translation.x(), tp.pose.translation.y());
  }
  for (const auto& tp : estimate) {
    top_down.bounds.include(tp.pose.translation.x(), tp.pose.translation.y());
  }
  top_down.bounds.pad();

  Panel error_panel;
  error_panel.px = 0.58 * w;
  error_panel.py = 0.10 * h;
  error_panel.pw = 0.38 * w;
  error_panel.ph = 0.80 * h;
  error_panel.bounds = Bounds::empty();
  for (const ScanError& e : errors) {
    error_panel.bounds.include(e.t, e.translation_m);
  }
  error_panel.bounds.include(error_panel.bounds.lo_x, 0.0);  // anchor at zero
  if (errors.empty()) error_panel.bounds = Bounds();
  error_panel.bounds.pad();

  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                options.width, options.height, options.width, options.height);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"18\" font-size=\"14\" "
                "font-family=\"monospace\">%s</text>\n",
                0.06 * w, options.title.c_str());
  svg += buf;

  svg += panel_frame(top_down, "top-down x/y [m]");
  svg += polyline(
      top_down, static_cast<int>(ground_truth.size()),
      [&](int i) {
        return std::pair(ground_truth[i].pose.translation.x(),
                         ground_truth[i].pose.translation.y());
      },
      "#999999");
  svg += polyline(
      top_down, static_cast<int>(estimate.size()),
      [&](int i) {
        return std::pair(estimate[i].pose.translation.x(),
                         estimate[i].pose.translation.y());
      },
      "#1f6fd0");
  svg += axis_labels(top_down);

  svg += panel_frame(error_panel, "translation error [m] over t [s]");
  if (!errors.empty()) {
    svg += polyline(
        error_panel, static_cast<int>(errors.size()),
        [&](int i) { return std::pair(errors[i].t, errors[i].translation_m); },
        "#c03030");
  }
  svg += axis_labels(error_panel);

  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" fill=\"#999999\" "
                "font-family=\"monospace\">ground truth</text>\n",
                top_down.px, top_down.py + top_down.ph + 26.0);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" fill=\"#1f6fd0\" "
                "font-family=\"monospace\">estimate</text>\n",
                top_down.px + 110.0, top_down.py + top_down.ph + 26.0);
  svg += buf;
  svg += "</svg>\n";

  std::FILE* f = std::fopen(file.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + file.string());
  const std::size_t written = std::fwrite(svg.data(), 1, svg.size(), f);
  std::fclose(f);
  if (written != svg.size()) {
    throw std::runtime_error("write failed: " + file.string());
  }
}

}  // namespace riglab
