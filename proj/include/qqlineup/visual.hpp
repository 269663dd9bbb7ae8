#ifndef QQLINEUP_VISUAL_HPP
#define QQLINEUP_VISUAL_HPP

// Scoring observer evaluations of a lineup: weighted identification counts,
// binomial p-values, critical counts and lineup power.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "qqlineup/error.hpp"
#include "qqlineup/lineup.hpp"

namespace qqlineup {

/// The fixed check-box reasons offered to observers.
enum class Reason { Outliers, LeftSideDifferent, RightSideDifferent, PointsCurve };

inline constexpr std::array kAllReasons{Reason::Outliers, Reason::LeftSideDifferent, Reason::RightSideDifferent,
                                        Reason::PointsCurve};

inline std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::Outliers: return "outliers";
    case Reason::LeftSideDifferent: return "left_side_different";
    case Reason::RightSideDifferent: return "right_side_different";
    case Reason::PointsCurve: return "points_curve";
  }
  return "?";
}

inline Reason parse_reason(std::string_view s) {
  for (Reason r : kAllReasons)
    if (s == to_string(r)) return r;
  throw UsageError("unknown reason '" + std::string(s) + "'");
}

struct Evaluation {
  std::string lineup_id;
  std::string observer_id;
  std::set<std::size_t> selected_panels;  // 1-based
  std::set<Reason> reasons;
  std::optional<std::string> free_text;
  std::string timestamp;
};

/// Throws UsageError unless the evaluation is admissible for a lineup with
/// m panels.
inline void validate_evaluation(const Evaluation& e, std::size_t m, bool allow_multiple_select) {
  if (e.observer_id.empty()) throw UsageError("evaluation: observer_id is required");
  if (e.selected_panels.empty()) throw UsageError("evaluation: at least one panel must be selected");
  if (*e.selected_panels.begin() < 1 || *e.selected_panels.rbegin() > m)
    throw UsageError("evaluation: selected panels must lie in 1.." + std::to_string(m));
  if (!allow_multiple_select && e.selected_panels.size() != 1)
    throw UsageError("evaluation: this lineup accepts exactly one selected panel");
}

/// 1/|selected| when the data panel was among the picks, else 0.
inline double evaluation_weight(const Evaluation& e, std::size_t data_position) {
  if (e.selected_panels.empty() || !e.selected_panels.contains(data_position)) return 0.0;
  return 1.0 / static_cast<double>(e.selected_panels.size());
}

/// P(B >= k) for B ~ Binomial(trials, p), summed term by term. Terms fall
/// back to log space when a factor would underflow.
inline double binomial_upper_tail(long long k, std::size_t trials, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binomial_upper_tail: p must lie in [0, 1]");
  const auto n = static_cast<long long>(trials);
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  double log_choose = 0.0;  // log C(n, k)
  for (long long i = 1; i <= k; ++i)
    log_choose += std::log(static_cast<double>(n - k + i)) - std::log(static_cast<double>(i));
  double sum = 0.0;
  for (long long j = k; j <= n; ++j) {
    const double a = static_cast<double>(j) * lp;
    const double b = static_cast<double>(n - j) * lq;
    if (a > -700.0 && b > -700.0 && log_choose < 700.0)
      sum += std::round(std::exp(log_choose)) * std::pow(p, static_cast<double>(j)) *
             std::pow(1.0 - p, static_cast<double>(n - j));
    else
      sum += std::exp(log_choose + a + b);
    if (j < n) log_choose += std::log(static_cast<double>(n - j)) - std::log(static_cast<double>(j + 1));
  }
  return std::min(sum, 1.0);
}

/// P(B >= ceil(y)) with B ~ Binomial(N, 1/m). Fractional weighted counts are
/// rounded up, which never overstates the evidence.
inline double visual_p_value(double y_weighted, std::size_t evaluations, std::size_t m) {
  if (m < 2) throw UsageError("visual_p_value: m must be at least 2");
  if (!(y_weighted >= 0.0)) throw UsageError("visual_p_value: y must be non-negative");
  if (y_weighted > static_cast<double>(evaluations) + 1e-9)
    throw UsageError("visual_p_value: y exceeds the number of evaluations");
  const auto k = static_cast<long long>(std::ceil(y_weighted - 1e-12));
  return binomial_upper_tail(k, evaluations, 1.0 / static_cast<double>(m));
}

/// Smallest k with P(Binomial(N, 1/m) >= k) <= alpha. Observing at least k
/// identifications rejects at level alpha.
inline std::size_t critical_count(std::size_t evaluations, std::size_t m, double alpha) {
  if (m < 2) throw UsageError("critical_count: m must be at least 2");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("critical_count: alpha must lie in (0, 1]");
  const double guess = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k <= evaluations; ++k)
    if (binomial_upper_tail(static_cast<long long>(k), evaluations, guess) <= alpha) return k;
  return evaluations + 1;
}

/// Probability of reaching the critical count when every observer picks the
/// data panel with probability p_hat.
inline double lineup_power(double p_hat, std::size_t evaluations, std::size_t m, double alpha) {
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw DomainError("lineup_power: p_hat must lie in [0, 1]");
  const auto k = critical_count(evaluations, m, alpha);
  return binomial_upper_tail(static_cast<long long>(k), evaluations, p_hat);
}

inline constexpr std::array kReportedAlphas{0.1, 0.05, 0.01};

struct VisualTestResult {
  std::string lineup_id;
  std::size_t N = 0;
  double y_weighted = 0.0;
  std::size_t m = 0;
  double p_value = 1.0;
  std::array<bool, kReportedAlphas.size()> reject{};  // aligned with kReportedAlphas

  [[nodiscard]] bool rejected_at(double alpha) const { return p_value <= alpha; }
};

/// Scores the evaluations of one lineup. Only the first evaluation of each
/// observer counts; malformed evaluations throw.
inline VisualTestResult aggregate(const std::vector<Evaluation>& evaluations, std::string_view lineup_id,
                                  std::size_t m, std::size_t data_position, bool allow_multiple_select) {
  VisualTestResult r;
  r.lineup_id = std::string(lineup_id);
  r.m = m;
  std::unordered_set<std::string> seen;
  for (const auto& e : evaluations) {
    if (e.lineup_id != lineup_id)
      throw UsageError("aggregate: evaluation for lineup '" + e.lineup_id + "' passed to '" + std::string(lineup_id) + "'");
    validate_evaluation(e, m, allow_multiple_select);
    if (!seen.insert(e.observer_id).second) continue;
    ++r.N;
    r.y_weighted += evaluation_weight(e, data_position);
  }
  r.y_weighted = std::min(r.y_weighted, static_cast<double>(r.N));
  r.p_value = std::max(visual_p_value(r.y_weighted, r.N, m), std::numeric_limits<double>::min());
  for (std::size_t i = 0; i < kReportedAlphas.size(); ++i) r.reject[i] = r.p_value <= kReportedAlphas[i];
  return r;
}

inline VisualTestResult aggregate(const std::vector<Evaluation>& evaluations, const Lineup& lineup) {
  return aggregate(evaluations, lineup.id, lineup.spec.m, lineup.data_position, lineup.spec.allow_multiple_select);
}

/// Weighted picks per panel (index 0 is panel 1), first evaluation per
/// observer only.
inline std::vector<double> panel_pick_counts(const std::vector<Evaluation>& evaluations, std::size_t m) {
  std::vector<double> counts(m, 0.0);
  std::unordered_set<std::string> seen;
  for (const auto& e : evaluations) {
    if (!seen.insert(e.observer_id).second || e.selected_panels.empty()) continue;
    const double w = 1.0 / static_cast<double>(e.selected_panels.size());
    for (auto p : e.selected_panels)
      if (p >= 1 && p <= m) counts[p - 1] += w;
  }
  return counts;
}

// --- JSON -----------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Evaluation& e) {
  std::vector<std::string> reasons;
  for (Reason r : e.reasons) reasons.emplace_back(to_string(r));
  j = nlohmann::json{{"lineup_id", e.lineup_id},
                     {"observer_id", e.observer_id},
                     {"selected_panels", std::vector<std::size_t>(e.selected_panels.begin(), e.selected_panels.end())},
                     {"reasons", reasons},
                     {"timestamp", e.timestamp}};
  j["free_text"] = e.free_text ? nlohmann::json(*e.free_text) : nlohmann::json(nullptr);
}

/// Parses an evaluation; structural problems become UsageError.
inline Evaluation evaluation_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("evaluation must be a JSON object");
  try {
    Evaluation e;
    e.lineup_id = j.value("lineup_id", "");
    e.observer_id = j.at("observer_id").get<std::string>();
    for (const auto& p : j.at("selected_panels")) {
      const auto v = p.get<long long>();
      if (v < 1) throw UsageError("evaluation: selected panels must be positive");
      if (!e.selected_panels.insert(static_cast<std::size_t>(v)).second)
        throw UsageError("evaluation: duplicate panel " + std::to_string(v));
    }
    if (j.contains("reasons"))
      for (const auto& r : j.at("reasons")) e.reasons.insert(parse_reason(r.get<std::string>()));
    if (j.contains("free_text") && !j.at("free_text").is_null()) e.free_text = j.at("free_text").get<std::string>();
    e.timestamp = j.value("timestamp", "");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw UsageError(std::string("evaluation: ") + ex.what());
  }
}

inline void to_json(nlohmann::json& j, const VisualTestResult& r) {
  nlohmann::json reject = nlohmann::json::object();
  for (std::size_t i = 0; i < kReportedAlphas.size(); ++i) {
    char key[16];
    std::snprintf(key, sizeof key, "%g", kReportedAlphas[i]);
    reject[key] = r.reject[i];
  }
  j = nlohmann::json{{"lineup_id", r.lineup_id}, {"N", r.N},         {"y_weighted", r.y_weighted},
                     {"m", r.m},                 {"p_value", r.p_value}, {"reject_at", reject}};
}

}  // namespace qqlineup

#endif  // QQLINEUP_VISUAL_HPP
