#ifndef QQLINEUP_LINEUP_HPP
#define QQLINEUP_LINEUP_HPP

// Lineups: the data Q-Q panel hidden at a random position among m - 1 null
// panels drawn under the null hypothesis.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qqlineup/digest.hpp"
#include "qqlineup/error.hpp"
#include "qqlineup/normal.hpp"
#include "qqlineup/qq_geometry.hpp"
#include "qqlineup/rng.hpp"
#include "qqlineup/sample.hpp"

namespace qqlineup {

enum class NullHypothesis {
  StandardNormal,        // H0: F = N(0, 1); identity reference line
  ScaledNormal,          // H0: F = N(0, S^2), S from the IQR of the data
  SampleVarianceNormal,  // H0: F = N(0, s^2), s the ordinary sample sd
};

inline std::string_view to_string(NullHypothesis h) {
  switch (h) {
    case NullHypothesis::StandardNormal: return "standard_normal";
    case NullHypothesis::ScaledNormal: return "scaled_normal";
    case NullHypothesis::SampleVarianceNormal: return "sample_variance_normal";
  }
  return "?";
}

inline NullHypothesis parse_hypothesis(std::string_view s) {
  for (auto h : {NullHypothesis::StandardNormal, NullHypothesis::ScaledNormal, NullHypothesis::SampleVarianceNormal})
    if (s == to_string(h)) return h;
  throw UsageError("unknown null hypothesis '" + std::string(s) + "'");
}

struct LineupSpec {
  std::size_t m = 20;
  QQDesign design = QQDesign::Standard;
  NullHypothesis hypothesis = NullHypothesis::ScaledNormal;
  SampleVector data;
  std::uint64_t seed = 0;
  bool allow_multiple_select = false;
  PanelOptions panel{};
  bool fix_detrended_aspect = false;

  void validate() const {
    if (m < 2) throw UsageError("lineup: m must be at least 2 (got " + std::to_string(m) + ")");
    if (data.size() < 3)
      throw UsageError("lineup: data must have at least 3 observations (got " + std::to_string(data.size()) + ")");
    if (!(panel.level > 0.0 && panel.level < 1.0)) throw UsageError("lineup: envelope level must lie in (0, 1)");
  }
};

struct Lineup {
  std::string id;
  LineupSpec spec;
  std::vector<QQPanelGeometry> panels;
  std::size_t data_position = 0;  // 1-based; private
  std::string key_digest;
  Interval shared_x;
  Interval shared_y;
};

/// S = IQR(x) / (2 Phi^{-1}(0.75)).
inline double estimate_scale_S(const SampleVector& x) {
  const double spread = iqr(x);
  if (!(spread > 0.0)) throw DegenerateInputError("estimate_scale_S: sample IQR is zero");
  return spread / standard_normal_iqr();
}

/// Standard deviation of the null distribution implied by the hypothesis.
inline double null_sd(const LineupSpec& spec) {
  switch (spec.hypothesis) {
    case NullHypothesis::StandardNormal: return 1.0;
    case NullHypothesis::ScaledNormal: return estimate_scale_S(spec.data);
    case NullHypothesis::SampleVarianceNormal: {
      const double s = sample_sd(spec.data);
      if (!(s > 0.0)) throw DegenerateInputError("lineup: data has zero variance");
      return s;
    }
  }
  return 1.0;
}

/// Reference line shared by every panel of the lineup.
inline ReferenceLine lineup_reference_line(const LineupSpec& spec) {
  if (spec.hypothesis == NullHypothesis::StandardNormal) return {1.0, 0.0};
  return {null_sd(spec), 0.0};
}

inline std::string null_stream_label(std::size_t null_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "nulls/panel-%02zu", null_index);
  return buf;
}

/// The m - 1 null samples, one independent stream per null index. A null
/// with zero IQR is redrawn from a derived sub-stream (at most 5 attempts).
inline std::vector<SampleVector> generate_nulls(const LineupSpec& spec) {
  spec.validate();
  const double sd = null_sd(spec);
  std::vector<SampleVector> nulls;
  nulls.reserve(spec.m - 1);
  for (std::size_t k = 1; k < spec.m; ++k) {
    RngStream stream{spec.seed, null_stream_label(k)};
    SampleVector s = sample_normal(stream, spec.data.size(), 0.0, sd);
    for (int attempt = 1; iqr(s) <= 0.0; ++attempt) {
      if (attempt > 5) throw DegenerateInputError("generate_nulls: could not draw a non-degenerate null sample");
      stream = stream.child("retry-" + std::to_string(attempt));
      s = sample_normal(stream, spec.data.size(), 0.0, sd);
    }
    nulls.push_back(std::move(s));
  }
  return nulls;
}

/// 1-based panel index of the data, uniform on 1..m.
inline std::size_t draw_data_position(std::uint64_t seed, std::size_t m) {
  Generator gen(RngStream{seed, "position"});
  return static_cast<std::size_t>(gen.uniform_int(1, m));
}

inline std::string compute_key_digest(std::string_view id, std::size_t position, std::string_view salt) {
  std::string msg(id);
  msg += '|';
  msg += std::to_string(position);
  msg += '|';
  msg += salt;
  return sha256_hex(msg);
}

/// True when `claimed` is the sealed data position.
inline bool verify_answer(std::string_view id, std::string_view key_digest, std::size_t claimed, std::string_view salt) {
  return compute_key_digest(id, claimed, salt) == key_digest;
}

/// Stable fingerprint of the data values (order-sensitive, bit-exact).
inline std::string data_fingerprint(const SampleVector& x) {
  std::string bytes;
  char buf[40];
  for (double v : x.values()) {
    std::snprintf(buf, sizeof buf, "%a;", v);
    bytes += buf;
  }
  return sha256_hex(bytes);
}

inline std::string default_lineup_id(const LineupSpec& spec) {
  std::string msg = data_fingerprint(spec.data);
  msg += '|' + std::to_string(spec.seed) + '|' + std::to_string(spec.m) + '|';
  msg += to_string(spec.design);
  msg += '|';
  msg += to_string(spec.hypothesis);
  return "L" + sha256_hex(msg).substr(0, 16);
}

namespace detail {

inline Interval widen_to(const Interval& r, double span) {
  const double c = 0.5 * (r.lo + r.hi);
  return {c - 0.5 * span, c + 0.5 * span};
}

}  // namespace detail

struct LineupOptions {
  std::string id;    // empty: derived from the spec
  std::string salt;  // secret mixed into the answer digest
};

inline Lineup assemble_lineup(LineupSpec spec, const LineupOptions& opts = {}) {
  spec.validate();
  const ReferenceLine line = lineup_reference_line(spec);
  const LineSource source = LineSource::fixed(line.slope, line.intercept);
  const auto nulls = generate_nulls(spec);

  std::string id = opts.id.empty() ? default_lineup_id(spec) : opts.id;
  const std::size_t position = draw_data_position(spec.seed, spec.m);
  std::vector<QQPanelGeometry> panels;
  panels.reserve(spec.m);
  std::size_t next_null = 0;
  for (std::size_t pos = 1; pos <= spec.m; ++pos) {
    const SampleVector& x = pos == position ? spec.data : nulls[next_null++];
    panels.push_back(build_panel(x, spec.design, source, spec.panel));
  }

  Interval sx = panels.front().x_range;
  Interval sy = panels.front().y_range;
  for (const auto& p : panels) {
    sx = sx.hull(p.x_range);
    sy = sy.hull(p.y_range);
  }
  if (spec.design != QQDesign::Detrended || spec.fix_detrended_aspect) {
    const double span = std::max(sx.span(), sy.span());
    sx = detail::widen_to(sx, span);
    sy = detail::widen_to(sy, span);
  }
  std::string digest = compute_key_digest(id, position, opts.salt);
  return Lineup{std::move(id), std::move(spec), std::move(panels), position, std::move(digest), sx, sy};
}

// --- JSON -----------------------------------------------------------------

inline constexpr int kLineupSchemaVersion = 1;

/// Spec fields safe to publish. The seed is omitted because it determines
/// the data position; data values are omitted unless requested.
inline nlohmann::json spec_to_json(const LineupSpec& spec, bool include_data, bool include_seed) {
  nlohmann::json j{{"m", spec.m},
                   {"design", to_string(spec.design)},
                   {"hypothesis", to_string(spec.hypothesis)},
                   {"n", spec.data.size()},
                   {"allow_multiple_select", spec.allow_multiple_select},
                   {"level", spec.panel.level},
                   {"fix_detrended_aspect", spec.fix_detrended_aspect}};
  if (include_data) j["data"] = std::vector<double>(spec.data.values().begin(), spec.data.values().end());
  if (include_seed) j["seed"] = spec.seed;
  return j;
}

/// Parses a LineupSpec from request/config JSON. Throws UsageError naming the
/// offending field.
inline LineupSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("lineup spec must be a JSON object");
  try {
    if (!j.contains("data")) throw UsageError("lineup spec: missing field 'data'");
    const auto values = j.at("data").get<std::vector<double>>();
    if (values.empty()) throw UsageError("lineup spec: 'data' must be non-empty");
    LineupSpec spec{.data = SampleVector(values)};
    if (j.contains("m")) {
      const auto m = j.at("m").get<long long>();
      if (m < 2) throw UsageError("lineup spec: m must be at least 2 (got " + std::to_string(m) + ")");
      spec.m = static_cast<std::size_t>(m);
    }
    if (j.contains("design")) spec.design = parse_design(j.at("design").get<std::string>());
    if (j.contains("hypothesis")) spec.hypothesis = parse_hypothesis(j.at("hypothesis").get<std::string>());
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("allow_multiple_select")) spec.allow_multiple_select = j.at("allow_multiple_select").get<bool>();
    if (j.contains("level")) spec.panel.level = j.at("level").get<double>();
    if (j.contains("fix_detrended_aspect")) spec.fix_detrended_aspect = j.at("fix_detrended_aspect").get<bool>();
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("lineup spec: ") + e.what());
  } catch (const DomainError& e) {
    throw UsageError(std::string("lineup spec: ") + e.what());
  }
}

inline nlohmann::json to_public_json(const Lineup& l, bool include_data = false) {
  nlohmann::json panels = nlohmann::json::array();
  for (std::size_t i = 0; i < l.panels.size(); ++i) {
    nlohmann::json p = l.panels[i];
    p["panel"] = i + 1;
    panels.push_back(std::move(p));
  }
  return nlohmann::json{{"schema_version", kLineupSchemaVersion},
                        {"id", l.id},
                        {"spec", spec_to_json(l.spec, include_data, false)},
                        {"panels", std::move(panels)},
                        {"shared_x_range", l.shared_x},
                        {"shared_y_range", l.shared_y},
                        {"key_digest", l.key_digest}};
}

/// Server-side record: everything needed to rebuild and score the lineup.
inline nlohmann::json to_private_json(const Lineup& l) {
  return nlohmann::json{{"schema_version", kLineupSchemaVersion},
                        {"id", l.id},
                        {"spec", spec_to_json(l.spec, true, true)},
                        {"data_position", l.data_position},
                        {"key_digest", l.key_digest}};
}

/// Rebuilds a lineup from its private record. Geometry is regenerated from
/// the spec, so it matches the original bit for bit.
inline Lineup lineup_from_private_json(const nlohmann::json& j, std::string_view salt = {}) {
  Lineup l = assemble_lineup(spec_from_json(j.at("spec")), LineupOptions{j.at("id").get<std::string>(), std::string(salt)});
  if (l.data_position != j.at("data_position").get<std::size_t>())
    throw UsageError("private lineup record is inconsistent with its spec");
  l.key_digest = j.at("key_digest").get<std::string>();
  return l;
}

}  // namespace qqlineup

#endif  // QQLINEUP_LINEUP_HPP
