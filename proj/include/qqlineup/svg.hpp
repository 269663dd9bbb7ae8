#ifndef QQLINEUP_SVG_HPP
#define QQLINEUP_SVG_HPP

#include <cstddef>
#include <cstdio>
#include <string>
#include <string_view>

#include "qqlineup/error.hpp"
#include "qqlineup/lineup.hpp"

namespace qqlineup {

struct SvgLayout {
  std::size_t rows = 4;
  std::size_t cols = 5;
  double panel_px = 150.0;
  double gap_px = 8.0;
  double point_radius = 1.8;
};

namespace detail {

inline std::string fmt_px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

struct PanelScale {
  Interval x, y;
  double size;

  [[nodiscard]] double px(double v) const { return x.span() > 0 ? (v - x.lo) / x.span() * size : 0.5 * size; }
  [[nodiscard]] double py(double v) const { return y.span() > 0 ? size - (v - y.lo) / y.span() * size : 0.5 * size; }
};

inline Interval padded(const Interval& r, double frac) {
  const double pad = r.span() > 0 ? frac * r.span() : 1.0;
  return {r.lo - pad, r.hi + pad};
}

}  // namespace detail

/// Renders the lineup as an SVG 1.1 document. Panels are numbered 1..m
/// row-major; every panel is drawn with identical styling on the shared
/// scale, so nothing but the plotted points distinguishes the data panel.
/// Output is a pure function of the lineup and layout.
inline std::string render_svg(const Lineup& lineup, const SvgLayout& layout = {}) {
  const std::size_t m = lineup.panels.size();
  if (layout.rows * layout.cols != m)
    throw UsageError("render_svg: layout " + std::to_string(layout.rows) + "x" + std::to_string(layout.cols) +
                     " does not hold " + std::to_string(m) + " panels");
  using detail::fmt_px;
  const double p = layout.panel_px;
  const double g = layout.gap_px;
  const double width = static_cast<double>(layout.cols) * (p + g) + g;
  const double height = static_cast<double>(layout.rows) * (p + g) + g;
  const detail::PanelScale scale{detail::padded(lineup.shared_x, 0.04), detail::padded(lineup.shared_y, 0.04), p};

  std::string out;
  out.reserve(4096 + m * 2048);
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt_px(width) + "\" height=\"" +
         fmt_px(height) + "\" viewBox=\"0 0 " + fmt_px(width) + " " + fmt_px(height) + "\"";
  out += " data-lineup-id=\"" + detail::xml_escape(lineup.id) + "\"";
  out += " data-m=\"" + std::to_string(m) + "\"";
  out += " data-n=\"" + std::to_string(lineup.spec.data.size()) + "\"";
  out += " data-design=\"" + std::string(to_string(lineup.spec.design)) + "\"";
  out += " data-hypothesis=\"" + std::string(to_string(lineup.spec.hypothesis)) + "\"";
  out += " data-rows=\"" + std::to_string(layout.rows) + "\" data-cols=\"" + std::to_string(layout.cols) + "\"";
  out += " data-multiple-select=\"" + std::string(lineup.spec.allow_multiple_select ? "true" : "false") + "\">\n";
  out += "<defs><clipPath id=\"plot-area\"><rect x=\"0\" y=\"0\" width=\"" + fmt_px(p) + "\" height=\"" + fmt_px(p) +
         "\"/></clipPath></defs>\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + fmt_px(width) + "\" height=\"" + fmt_px(height) + "\" fill=\"#ffffff\"/>\n";

  for (std::size_t k = 0; k < m; ++k) {
    const auto& panel = lineup.panels[k];
    const double ox = g + static_cast<double>(k % layout.cols) * (p + g);
    const double oy = g + static_cast<double>(k / layout.cols) * (p + g);
    out += "<g class=\"panel\" data-panel=\"" + std::to_string(k + 1) + "\" transform=\"translate(" + fmt_px(ox) + "," +
           fmt_px(oy) + ")\">\n";
    out += "<rect class=\"frame\" x=\"0\" y=\"0\" width=\"" + fmt_px(p) + "\" height=\"" + fmt_px(p) +
           "\" fill=\"#ebebeb\"/>\n";
    out += "<g clip-path=\"url(#plot-area)\">\n";

    if (panel.envelope) {
      std::string d = "M";
      const auto& t = panel.theoretical;
      for (std::size_t i = 0; i < t.size(); ++i) {
        d += (i ? " L" : "") + fmt_px(scale.px(t[i])) + "," + fmt_px(scale.py(panel.envelope->upper[i]));
      }
      for (std::size_t i = t.size(); i-- > 0;) {
        d += " L" + fmt_px(scale.px(t[i])) + "," + fmt_px(scale.py(panel.envelope->lower[i]));
      }
      d += " Z";
      out += "<path class=\"band\" d=\"" + d + "\" fill=\"#bdbdbd\" fill-opacity=\"0.6\" stroke=\"none\"/>\n";
    }

    const double x0 = scale.x.lo;
    const double x1 = scale.x.hi;
    out += "<line class=\"ref\" x1=\"" + fmt_px(scale.px(x0)) + "\" y1=\"" + fmt_px(scale.py(panel.line.at(x0))) +
           "\" x2=\"" + fmt_px(scale.px(x1)) + "\" y2=\"" + fmt_px(scale.py(panel.line.at(x1))) +
           "\" stroke=\"#3366cc\" stroke-width=\"1\"/>\n";

    for (std::size_t i = 0; i < panel.theoretical.size(); ++i) {
      out += "<circle class=\"pt\" cx=\"" + fmt_px(scale.px(panel.theoretical[i])) + "\" cy=\"" +
             fmt_px(scale.py(panel.ordinates[i])) + "\" r=\"" + fmt_px(layout.point_radius) + "\" fill=\"#000000\"/>\n";
    }
    out += "</g>\n";
    out += "<text class=\"label\" x=\"4\" y=\"12\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#444444\">" +
           std::to_string(k + 1) + "</text>\n";
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

/// Near-square grid with rows * cols == m (4x5 for the default m = 20).
inline SvgLayout default_layout(std::size_t m) {
  SvgLayout l;
  std::size_t best_rows = 1;
  for (std::size_t r = 1; r * r <= m; ++r)
    if (m % r == 0) best_rows = r;
  l.rows = best_rows;
  l.cols = m / best_rows;
  return l;
}

}  // namespace qqlineup

#endif  // QQLINEUP_SVG_HPP
