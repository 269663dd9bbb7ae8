#ifndef QQLINEUP_SAMPLE_HPP
#define QQLINEUP_SAMPLE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qqlineup/error.hpp"
#include "qqlineup/normal.hpp"
#include "qqlineup/rng.hpp"

namespace qqlineup {

/// Where a sample came from. Absent for user-supplied data.
struct Provenance {
  std::string distribution;  // e.g. "normal(0,1)", "t(5)"
  std::uint64_t seed = 0;
  std::string stream_label;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// A non-empty batch of finite observations. Tracks whether the values are
/// known to be in non-decreasing order.
class SampleVector {
 public:
  explicit SampleVector(std::vector<double> values, std::optional<Provenance> provenance = std::nullopt)
      : values_(std::move(values)), provenance_(std::move(provenance)) {
    if (values_.empty()) throw DomainError("SampleVector: sample must be non-empty");
    for (double v : values_)
      if (!std::isfinite(v)) throw DomainError("SampleVector: values must be finite");
    sorted_ = std::is_sorted(values_.begin(), values_.end());
  }

  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] bool is_sorted() const noexcept { return sorted_; }
  [[nodiscard]] const std::optional<Provenance>& provenance() const noexcept { return provenance_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Copy with values in non-decreasing order (order statistics).
  [[nodiscard]] SampleVector sorted() const {
    if (sorted_) return *this;
    SampleVector out = *this;
    std::sort(out.values_.begin(), out.values_.end());
    out.sorted_ = true;
    return out;
  }

  /// a + b * x, elementwise.
  [[nodiscard]] SampleVector affine(double a, double b) const {
    std::vector<double> v(values_.size());
    std::transform(values_.begin(), values_.end(), v.begin(), [=](double x) { return a + b * x; });
    return SampleVector(std::move(v));
  }

  friend bool operator==(const SampleVector& l, const SampleVector& r) { return l.values_ == r.values_; }

 private:
  std::vector<double> values_;
  std::optional<Provenance> provenance_;
  bool sorted_ = false;
};

inline double mean(const SampleVector& x) {
  const auto v = x.values();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation with the n-1 divisor.
inline double sample_sd(const SampleVector& x) {
  if (x.size() < 2) throw DomainError("sample_sd: need at least two observations");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x.values()) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

/// Empirical quantile by linear interpolation between order statistics at
/// 1-based position h = (n - 1) p + 1.
inline double sample_quantile(const SampleVector& x, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("sample_quantile: p must lie in [0, 1]");
  const SampleVector s = x.sorted();
  const auto v = s.values();
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double iqr(const SampleVector& x) {
  if (x.size() < 3) throw DomainError("iqr: need at least three observations");
  return sample_quantile(x, 0.75) - sample_quantile(x, 0.25);
}

enum class PlottingRule {
  Default,  // Blom for n <= 10, Hazen otherwise
  Blom,     // (i - 3/8) / (n + 1/4)
  Hazen,    // (i - 1/2) / n
};

/// Probabilities attached to the order statistics x(1..n).
inline std::vector<double> plotting_positions(std::size_t n, PlottingRule rule = PlottingRule::Default) {
  if (n == 0) throw DomainError("plotting_positions: n must be positive");
  if (rule == PlottingRule::Default) rule = n <= 10 ? PlottingRule::Blom : PlottingRule::Hazen;
  const double dn = static_cast<double>(n);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rank = static_cast<double>(i + 1);
    p[i] = rule == PlottingRule::Blom ? (rank - 0.375) / (dn + 0.25) : (rank - 0.5) / dn;
  }
  return p;
}

namespace detail {

inline double draw_standard_normal(Generator& gen) { return normal_quantile(gen.uniform01()); }

// Marsaglia & Tsang (2000), with the u^(1/a) boost for shape < 1.
inline double draw_gamma(Generator& gen, double shape) {
  if (shape < 1.0) {
    const double g = draw_gamma(gen, shape + 1.0);
    return g * std::pow(gen.uniform01(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double z = draw_standard_normal(gen);
    double v = 1.0 + c * z;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = gen.uniform01();
    if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
    if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace detail

/// n i.i.d. N(mean, sd^2) draws. Built as mean + sd * z from a fixed
/// standard normal stream, so location-scale changes are exact.
inline SampleVector sample_normal(const RngStream& rng, std::size_t n, double mu = 0.0, double sd = 1.0) {
  if (n == 0) throw DomainError("sample_normal: n must be positive");
  if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mu)) throw DomainError("sample_normal: sd must be positive");
  Generator gen(rng);
  std::vector<double> v(n);
  for (auto& x : v) x = mu + sd * detail::draw_standard_normal(gen);
  return SampleVector(std::move(v), Provenance{"normal", rng.seed, rng.label});
}

/// n i.i.d. Student-t draws, Z / sqrt(V / df) with Z and V from separate
/// sub-streams.
inline SampleVector sample_t(const RngStream& rng, std::size_t n, double df) {
  if (n == 0) throw DomainError("sample_t: n must be positive");
  if (!(df > 0.0) || !std::isfinite(df)) throw DomainError("sample_t: df must be positive");
  Generator zgen(rng.child("normal"));
  Generator vgen(rng.child("chi2"));
  std::vector<double> v(n);
  for (auto& x : v) {
    const double z = detail::draw_standard_normal(zgen);
    const double chi2 = 2.0 * detail::draw_gamma(vgen, 0.5 * df);
    x = z / std::sqrt(chi2 / df);
  }
  return SampleVector(std::move(v), Provenance{"t", rng.seed, rng.label});
}

}  // namespace qqlineup

#endif  // QQLINEUP_SAMPLE_HPP
