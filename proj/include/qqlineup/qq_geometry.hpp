#ifndef QQLINEUP_QQ_GEOMETRY_HPP
#define QQLINEUP_QQ_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qqlineup/error.hpp"
#include "qqlineup/normal.hpp"
#include "qqlineup/sample.hpp"

namespace qqlineup {

enum class QQDesign { Control, Standard, Detrended };

inline constexpr std::array kAllDesigns{QQDesign::Control, QQDesign::Standard, QQDesign::Detrended};

inline std::string_view to_string(QQDesign d) {
  switch (d) {
    case QQDesign::Control: return "control";
    case QQDesign::Standard: return "standard";
    case QQDesign::Detrended: return "detrended";
  }
  return "?";
}

inline QQDesign parse_design(std::string_view s) {
  for (QQDesign d : kAllDesigns)
    if (s == to_string(d)) return d;
  if (s == "de-trended") return QQDesign::Detrended;
  throw UsageError("unknown Q-Q design '" + std::string(s) + "'");
}

struct ReferenceLine {
  double slope = 1.0;
  double intercept = 0.0;

  [[nodiscard]] double at(double z) const noexcept { return intercept + slope * z; }
  friend bool operator==(const ReferenceLine&, const ReferenceLine&) = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double span() const noexcept { return hi - lo; }
  [[nodiscard]] bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  [[nodiscard]] Interval hull(const Interval& o) const noexcept { return {std::min(lo, o.lo), std::max(hi, o.hi)}; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct Envelope {
  std::vector<double> lower;
  std::vector<double> upper;
  friend bool operator==(const Envelope&, const Envelope&) = default;
};

/// Everything needed to draw one Q-Q panel.
struct QQPanelGeometry {
  QQDesign design = QQDesign::Standard;
  std::vector<double> theoretical;  // x: Phi^{-1}(p_i), strictly increasing
  std::vector<double> ordinates;    // y: order statistics, or residuals when de-trended
  ReferenceLine line;
  std::optional<Envelope> envelope;  // absent for the control design
  Interval x_range;
  Interval y_range;

  friend bool operator==(const QQPanelGeometry&, const QQPanelGeometry&) = default;
};

struct QQPoints {
  std::vector<double> theoretical;
  std::vector<double> sample;
};

/// Theoretical normal quantiles at the plotting positions, paired with the
/// order statistics.
inline QQPoints qq_points(const SampleVector& x, PlottingRule rule = PlottingRule::Default) {
  QQPoints out;
  const auto p = plotting_positions(x.size(), rule);
  out.theoretical.reserve(p.size());
  for (double pi : p) out.theoretical.push_back(normal_quantile(pi));
  const SampleVector s = x.sorted();
  out.sample.assign(s.values().begin(), s.values().end());
  return out;
}

/// Line through both quartile pairs: slope is the ratio of the sample IQR to
/// the standard normal IQR.
inline ReferenceLine robust_reference_line(const SampleVector& x) {
  if (x.size() < 3) throw DomainError("robust_reference_line: need at least three observations");
  const double spread = iqr(x);
  if (!(spread > 0.0)) throw DegenerateInputError("robust_reference_line: sample IQR is zero");
  const double slope = spread / standard_normal_iqr();
  return {slope, sample_quantile(x, 0.25) - slope * normal_quantile(0.25)};
}

/// Half-widths of the pointwise band: z* (b / phi(z_i)) sqrt(p_i (1 - p_i) / n).
/// Depends only on n, the slope and the level.
inline std::vector<double> envelope_half_widths(std::size_t n, double slope, double level,
                                                PlottingRule rule = PlottingRule::Default) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("pointwise_envelope: level must lie in (0, 1)");
  const double zstar = normal_quantile(0.5 * (1.0 + level));
  const auto p = plotting_positions(n, rule);
  const double dn = static_cast<double>(n);
  std::vector<double> h(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    const double z = normal_quantile(p[i]);
    h[i] = zstar * (std::fabs(slope) / normal_pdf(z)) * std::sqrt(p[i] * (1.0 - p[i]) / dn);
    h[n - 1 - i] = h[i];
  }
  return h;
}

inline Envelope pointwise_envelope(std::size_t n, const ReferenceLine& line, double level = 0.95,
                                   PlottingRule rule = PlottingRule::Default) {
  const auto h = envelope_half_widths(n, line.slope, level, rule);
  const auto p = plotting_positions(n, rule);
  Envelope e;
  e.lower.resize(n);
  e.upper.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = line.at(normal_quantile(p[i]));
    e.lower[i] = c - h[i];
    e.upper[i] = c + h[i];
  }
  return e;
}

inline Envelope pointwise_envelope(const SampleVector& x, const ReferenceLine& line, double level = 0.95,
                                   PlottingRule rule = PlottingRule::Default) {
  if (x.size() < 3) throw DomainError("pointwise_envelope: need at least three observations");
  return pointwise_envelope(x.size(), line, level, rule);
}

/// Where the panel's reference line comes from.
struct LineSource {
  enum class Kind { Identity, Fixed, Robust };
  Kind kind = Kind::Identity;
  ReferenceLine fixed_line;

  static LineSource identity() { return {}; }
  static LineSource fixed(double slope, double intercept) { return {Kind::Fixed, {slope, intercept}}; }
  static LineSource robust() { return {Kind::Robust, {}}; }

  [[nodiscard]] ReferenceLine resolve(const SampleVector& x) const {
    switch (kind) {
      case Kind::Identity: return {1.0, 0.0};
      case Kind::Fixed: return fixed_line;
      case Kind::Robust: return robust_reference_line(x);
    }
    return {};
  }
};

struct PanelOptions {
  double level = 0.95;
  PlottingRule rule = PlottingRule::Default;
};

namespace detail {

inline Interval range_of(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace detail

inline QQPanelGeometry build_panel(const SampleVector& x, QQDesign design, const LineSource& source,
                                   const PanelOptions& opts = {}) {
  auto pts = qq_points(x, opts.rule);
  const ReferenceLine line = source.resolve(x);
  if (!std::isfinite(line.slope) || !std::isfinite(line.intercept))
    throw DomainError("build_panel: reference line must be finite");

  QQPanelGeometry g;
  g.design = design;
  g.theoretical = std::move(pts.theoretical);
  g.x_range = detail::range_of(g.theoretical);
  const std::size_t n = g.theoretical.size();

  if (design == QQDesign::Detrended) {
    g.line = {0.0, 0.0};
    g.ordinates.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.ordinates[i] = pts.sample[i] - line.at(g.theoretical[i]);
    const auto h = envelope_half_widths(n, line.slope, opts.level, opts.rule);
    Envelope e{std::vector<double>(n), h};
    for (std::size_t i = 0; i < n; ++i) e.lower[i] = -h[i];
    g.envelope = std::move(e);
  } else {
    g.line = line;
    g.ordinates = std::move(pts.sample);
    if (design == QQDesign::Standard) g.envelope = pointwise_envelope(n, line, opts.level, opts.rule);
  }

  g.y_range = detail::range_of(g.ordinates);
  if (g.envelope) {
    g.y_range = g.y_range.hull(detail::range_of(g.envelope->lower));
    g.y_range = g.y_range.hull(detail::range_of(g.envelope->upper));
  }
  return g;
}

inline constexpr int kGeometrySchemaVersion = 1;

inline void to_json(nlohmann::json& j, const Interval& r) { j = nlohmann::json::array({r.lo, r.hi}); }
inline void from_json(const nlohmann::json& j, Interval& r) {
  r.lo = j.at(0).get<double>();
  r.hi = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const QQPanelGeometry& g) {
  j = nlohmann::json{{"schema_version", kGeometrySchemaVersion},
                     {"design", to_string(g.design)},
                     {"theoretical", g.theoretical},
                     {"ordinates", g.ordinates},
                     {"line", {{"slope", g.line.slope}, {"intercept", g.line.intercept}}},
                     {"x_range", g.x_range},
                     {"y_range", g.y_range}};
  if (g.envelope)
    j["envelope"] = {{"lower", g.envelope->lower}, {"upper", g.envelope->upper}};
  else
    j["envelope"] = nullptr;
}

inline void from_json(const nlohmann::json& j, QQPanelGeometry& g) {
  g.design = parse_design(j.at("design").get<std::string>());
  g.theoretical = j.at("theoretical").get<std::vector<double>>();
  g.ordinates = j.at("ordinates").get<std::vector<double>>();
  g.line = {j.at("line").at("slope").get<double>(), j.at("line").at("intercept").get<double>()};
  g.x_range = j.at("x_range").get<Interval>();
  g.y_range = j.at("y_range").get<Interval>();
  if (j.at("envelope").is_null())
    g.envelope.reset();
  else
    g.envelope = Envelope{j["envelope"].at("lower").get<std::vector<double>>(),
                          j["envelope"].at("upper").get<std::vector<double>>()};
}

}  // namespace qqlineup

#endif  // QQLINEUP_QQ_GEOMETRY_HPP
