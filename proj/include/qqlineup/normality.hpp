#ifndef QQLINEUP_NORMALITY_HPP
#define QQLINEUP_NORMALITY_HPP

// Classical goodness-of-fit tests for normality: Kolmogorov-Smirnov,
// Lilliefors, Anderson-Darling, Cramer-von Mises and Shapiro-Wilk, plus
// Monte Carlo null tables for calibration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qqlineup/error.hpp"
#include "qqlineup/normal.hpp"
#include "qqlineup/rng.hpp"
#include "qqlineup/sample.hpp"

namespace qqlineup {

enum class Method { KS, LF, AD, CVM, SW };

inline constexpr std::array kAllMethods{Method::SW, Method::AD, Method::LF, Method::KS, Method::CVM};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::KS: return "KS";
    case Method::LF: return "LF";
    case Method::AD: return "AD";
    case Method::CVM: return "CVM";
    case Method::SW: return "SW";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (s == to_string(m)) return m;
  if (s == "CvM" || s == "cvm") return Method::CVM;
  if (s == "sw") return Method::SW;
  if (s == "ad") return Method::AD;
  if (s == "lf") return Method::LF;
  if (s == "ks") return Method::KS;
  throw UsageError("unknown test method '" + std::string(s) + "'");
}

/// Small values of W are evidence against normality; every other
/// statistic rejects for large values.
constexpr bool rejects_low(Method m) noexcept { return m == Method::SW; }

struct TestResult {
  Method method = Method::SW;
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool params_estimated = true;
};

/// Sorted Monte Carlo null distribution of one statistic at one sample size.
struct NullTable {
  static constexpr int kFormatVersion = 1;

  Method method = Method::LF;
  std::size_t n = 0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<double> sorted_statistics;

  /// Add-one Monte Carlo p-value: (1 + #{as or more extreme}) / (reps + 1).
  [[nodiscard]] double p_value(double observed) const {
    const auto& s = sorted_statistics;
    std::size_t extreme;
    if (rejects_low(method))
      extreme = static_cast<std::size_t>(std::upper_bound(s.begin(), s.end(), observed) - s.begin());
    else
      extreme = static_cast<std::size_t>(s.end() - std::lower_bound(s.begin(), s.end(), observed));
    return (1.0 + static_cast<double>(extreme)) / (static_cast<double>(s.size()) + 1.0);
  }

  /// Critical value at level alpha: the (1 - alpha) quantile for upper-tail
  /// statistics, the alpha quantile for SW.
  [[nodiscard]] double critical_value(double alpha) const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("critical_value: alpha must lie in (0, 1)");
    const double p = rejects_low(method) ? alpha : 1.0 - alpha;
    return sample_quantile(SampleVector(sorted_statistics), p);
  }
};

namespace detail {

struct Standardized {
  std::vector<double> z;  // sorted, (x - mean) / sd
  double mean = 0.0;
  double sd = 0.0;
};

inline Standardized standardize(const SampleVector& x, std::optional<double> mu = {}, std::optional<double> sd = {}) {
  Standardized out;
  out.mean = mu ? *mu : mean(x);
  out.sd = sd ? *sd : sample_sd(x);
  if (!(out.sd > 0.0) || !std::isfinite(out.sd))
    throw DegenerateInputError("sample has zero variance; normality statistics are undefined");
  const SampleVector s = x.sorted();
  out.z.reserve(s.size());
  for (double v : s.values()) out.z.push_back((v - out.mean) / out.sd);
  return out;
}

inline void require_n(const SampleVector& x, std::size_t min_n, const char* what) {
  if (x.size() < min_n)
    throw UsageError(std::string(what) + ": need at least " + std::to_string(min_n) + " observations");
}

inline double clamp_probability(double p) { return std::clamp(p, 0.0, 1.0); }

inline double kolmogorov_max_gap(const std::vector<double>& z_sorted) {
  const double n = static_cast<double>(z_sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z_sorted.size(); ++i) {
    const double f = normal_cdf(z_sorted[i]);
    const double above = static_cast<double>(i + 1) / n - f;
    const double below = f - static_cast<double>(i) / n;
    d = std::max({d, above, below});
  }
  return d;
}

// Horner evaluation, c[0] + c[1] x + c[2] x^2 + ...
template <std::size_t N>
double poly(const std::array<double, N>& c, double x) {
  double r = 0.0;
  for (std::size_t k = N; k-- > 0;) r = r * x + c[k];
  return r;
}

}  // namespace detail

/// Asymptotic Kolmogorov survival function Q(lambda) = P(K > lambda).
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Jacobi-theta form, fast for small lambda.
    const double a = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 7; k += 2) s += std::exp(a * k * k);
    return detail::clamp_probability(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s);
  }
  double s = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += sign * term;
    if (term < 1e-17) break;
    sign = -sign;
  }
  return detail::clamp_probability(2.0 * s);
}

/// D = sup |F_n - F| against the fully specified N(mu, sd^2), taking both
/// sides of every ECDF step.
inline double ks_statistic(const SampleVector& x, double mu, double sd) {
  if (!(sd > 0.0) || !std::isfinite(sd)) throw DomainError("ks_statistic: sd must be positive");
  detail::require_finite(mu, "ks_statistic");
  return detail::kolmogorov_max_gap(detail::standardize(x, mu, sd).z);
}

/// KS test against fixed parameters; p-value from the Kolmogorov
/// distribution with Stephens' finite-n scaling.
inline TestResult ks_test(const SampleVector& x, double mu, double sd) {
  const double d = ks_statistic(x, mu, sd);
  const double rn = std::sqrt(static_cast<double>(x.size()));
  return {Method::KS, d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d), x.size(), false};
}

/// KS with (mean, sd) plugged in but the unadjusted Kolmogorov p-value.
/// Conservative; reported only for comparison with Lilliefors.
inline TestResult ks_test_estimated(const SampleVector& x) {
  detail::require_n(x, 4, "ks_test_estimated");
  const double d = detail::kolmogorov_max_gap(detail::standardize(x).z);
  const double rn = std::sqrt(static_cast<double>(x.size()));
  return {Method::KS, d, kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d), x.size(), true};
}

inline double lilliefors_statistic(const SampleVector& x) {
  detail::require_n(x, 4, "lilliefors");
  return detail::kolmogorov_max_gap(detail::standardize(x).z);
}

/// Lilliefors test: KS statistic with estimated mean and sd, p-value from a
/// Monte Carlo null table built at the same n.
inline TestResult lilliefors_test(const SampleVector& x, const NullTable& table) {
  if (table.method != Method::LF && table.method != Method::KS)
    throw UsageError("lilliefors_test: null table was built for " + std::string(to_string(table.method)));
  if (table.n != x.size())
    throw UsageError("lilliefors_test: null table n=" + std::to_string(table.n) +
                     " does not match sample n=" + std::to_string(x.size()));
  const double d = lilliefors_statistic(x);
  return {Method::LF, d, table.p_value(d), x.size(), true};
}

inline double ad_statistic(const SampleVector& x) {
  detail::require_n(x, 4, "ad_test");
  const auto z = detail::standardize(x).z;
  const std::size_t n = z.size();
  constexpr double lo = 1e-15;
  constexpr double hi = 1.0 - 1e-15;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f_low = std::clamp(normal_cdf(z[i]), lo, hi);
    const double sf_high = std::clamp(normal_sf(z[n - 1 - i]), lo, hi);
    s += static_cast<double>(2 * i + 1) * (std::log(f_low) + std::log(sf_high));
  }
  const double dn = static_cast<double>(n);
  return -dn - s / dn;
}

/// Anderson-Darling p-value for the normal case with both parameters
/// estimated (Stephens' modified statistic, piecewise exponential fit).
inline double ad_p_value(double a2, std::size_t n) {
  const double dn = static_cast<double>(n);
  const double aa = a2 * (1.0 + 0.75 / dn + 2.25 / (dn * dn));
  double p;
  if (aa < 0.2)
    p = 1.0 - std::exp(-13.436 + 101.14 * aa - 223.73 * aa * aa);
  else if (aa < 0.34)
    p = 1.0 - std::exp(-8.318 + 42.796 * aa - 59.938 * aa * aa);
  else if (aa < 0.6)
    p = std::exp(0.9177 - 4.279 * aa - 1.38 * aa * aa);
  else if (aa < 10.0)
    p = std::exp(1.2937 - 5.709 * aa + 0.0186 * aa * aa);
  else
    p = 3.7e-24;
  return detail::clamp_probability(p);
}

inline TestResult ad_test(const SampleVector& x) {
  const double a2 = ad_statistic(x);
  return {Method::AD, a2, ad_p_value(a2, x.size()), x.size(), true};
}

inline double cvm_statistic(const SampleVector& x) {
  detail::require_n(x, 4, "cvm_test");
  const auto z = detail::standardize(x).z;
  const double dn = static_cast<double>(z.size());
  double s = 1.0 / (12.0 * dn);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = normal_cdf(z[i]) - static_cast<double>(2 * i + 1) / (2.0 * dn);
    s += d * d;
  }
  return s;
}

/// Cramer-von Mises p-value, normal case with estimated parameters.
inline double cvm_p_value(double w2, std::size_t n) {
  const double ww = (1.0 + 0.5 / static_cast<double>(n)) * w2;
  double p;
  if (ww < 0.0275)
    p = 1.0 - std::exp(-13.953 + 775.5 * ww - 12542.61 * ww * ww);
  else if (ww < 0.051)
    p = 1.0 - std::exp(-5.903 + 179.546 * ww - 1515.29 * ww * ww);
  else if (ww < 0.092)
    p = std::exp(0.886 - 31.62 * ww + 10.897 * ww * ww);
  else if (ww < 1.1)
    p = std::exp(1.111 - 34.242 * ww + 12.832 * ww * ww);
  else
    p = 7.37e-10;
  return detail::clamp_probability(p);
}

inline TestResult cvm_test(const SampleVector& x) {
  const double w2 = cvm_statistic(x);
  return {Method::CVM, w2, cvm_p_value(w2, x.size()), x.size(), true};
}

/// Shapiro-Wilk coefficients for the order statistics x(1..n), Royston's
/// polynomial approximation (AS R94). Antisymmetric, unit norm.
inline std::vector<double> shapiro_wilk_coefficients(std::size_t n) {
  if (n < 3 || n > 5000) throw UsageError("sw_test: n must lie in [3, 5000]");
  const std::size_t half = n / 2;
  std::vector<double> upper(half);  // weights for x(n), x(n-1), ...
  if (n == 3) {
    upper[0] = std::numbers::sqrt2 / 2.0;
  } else {
    static constexpr std::array<double, 6> c1{0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static constexpr std::array<double, 6> c2{0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double an = static_cast<double>(n);
    std::vector<double> m(half);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
      summ2 += m[i] * m[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(an);
    const double a1 = detail::poly(c1, rsn) - m[0] / ssumm2;
    std::size_t first_plain;
    double fac;
    if (n > 5) {
      const double a2 = -m[1] / ssumm2 + detail::poly(c2, rsn);
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      upper[1] = a2;
      first_plain = 2;
    } else {
      fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
      first_plain = 1;
    }
    upper[0] = a1;
    for (std::size_t i = first_plain; i < half; ++i) upper[i] = -m[i] / fac;
  }
  std::vector<double> a(n, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    a[n - 1 - i] = upper[i];
    a[i] = -upper[i];
  }
  return a;
}

/// Royston's normalizing transform of W to a p-value (exact for n = 3).
inline double sw_p_value(double w, std::size_t n) {
  if (n == 3) {
    constexpr double pi6 = 6.0 / std::numbers::pi;
    constexpr double stqr = std::numbers::pi / 3.0;
    return detail::clamp_probability(pi6 * (std::asin(std::sqrt(std::min(w, 1.0))) - stqr));
  }
  const double w1 = 1.0 - w;
  if (w1 <= 0.0) return 1.0;
  static constexpr std::array<double, 2> g{-2.273, 0.459};
  static constexpr std::array<double, 4> c3{0.5440, -0.39978, 0.025054, -6.714e-4};
  static constexpr std::array<double, 4> c4{1.3822, -0.77857, 0.062767, -0.0020322};
  static constexpr std::array<double, 4> c5{-1.5861, -0.31082, -0.083751, 0.0038915};
  static constexpr std::array<double, 3> c6{-0.4803, -0.082676, 0.0030302};
  const double an = static_cast<double>(n);
  double y = std::log(w1);
  double m;
  double s;
  if (n <= 11) {
    const double gamma = detail::poly(g, an);
    if (y >= gamma) return 1e-99;
    y = -std::log(gamma - y);
    m = detail::poly(c3, an);
    s = std::exp(detail::poly(c4, an));
  } else {
    const double xx = std::log(an);
    m = detail::poly(c5, xx);
    s = std::exp(detail::poly(c6, xx));
  }
  return normal_sf((y - m) / s);
}

inline double sw_statistic(const SampleVector& x) {
  if (x.size() < 3 || x.size() > 5000) throw UsageError("sw_test: n must lie in [3, 5000]");
  const SampleVector s = x.sorted();
  const auto v = s.values();
  const double range = v.back() - v.front();
  if (!(range > 0.0)) throw DegenerateInputError("sw_test: sample has zero range");
  const auto a = shapiro_wilk_coefficients(v.size());
  // Squared correlation between coefficients and range-scaled data; 1 - W
  // is formed directly to avoid cancellation near W = 1.
  const double dn = static_cast<double>(v.size());
  double sx = 0.0;
  double sa = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sx += v[i] / range;
    sa += a[i];
  }
  sx /= dn;
  sa /= dn;
  double ssa = 0.0, ssx = 0.0, sax = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double da = a[i] - sa;
    const double dx = v[i] / range - sx;
    ssa += da * da;
    ssx += dx * dx;
    sax += da * dx;
  }
  const double root = std::sqrt(ssa * ssx);
  const double w1 = std::max(0.0, (root - sax) * (root + sax) / (ssa * ssx));
  return 1.0 - w1;
}

inline TestResult sw_test(const SampleVector& x) {
  const double w = sw_statistic(x);
  return {Method::SW, w, sw_p_value(w, x.size()), x.size(), true};
}

/// Statistic of `method` with parameters estimated from the sample (for KS
/// this coincides with the Lilliefors statistic).
inline double estimated_statistic(Method method, const SampleVector& x) {
  switch (method) {
    case Method::KS:
    case Method::LF: return lilliefors_statistic(x);
    case Method::AD: return ad_statistic(x);
    case Method::CVM: return cvm_statistic(x);
    case Method::SW: return sw_statistic(x);
  }
  throw UsageError("unknown method");
}

/// Null distribution of `method` on N(0,1) samples of size n, parameters
/// re-estimated on every draw.
inline NullTable build_null_table(Method method, std::size_t n, std::size_t reps, const RngStream& rng) {
  if (reps < 1000) throw UsageError("build_null_table: reps must be at least 1000");
  if (n < 4 || n > 5000) throw UsageError("build_null_table: n must lie in [4, 5000]");
  NullTable t{method, n, reps, rng.seed, {}};
  t.sorted_statistics.reserve(reps);
  Generator gen(rng.child(std::string("null/") + std::string(to_string(method)) + "/n=" + std::to_string(n)));
  std::vector<double> buf(n);
  for (std::size_t r = 0; r < reps; ++r) {
    for (auto& v : buf) v = detail::draw_standard_normal(gen);
    t.sorted_statistics.push_back(estimated_statistic(method, SampleVector(buf)));
  }
  std::sort(t.sorted_statistics.begin(), t.sorted_statistics.end());
  return t;
}

// --- JSON -----------------------------------------------------------------

inline void to_json(nlohmann::json& j, const TestResult& r) {
  j = nlohmann::json{{"method", to_string(r.method)},
                     {"statistic", r.statistic},
                     {"p_value", r.p_value},
                     {"n", r.n},
                     {"params_estimated", r.params_estimated}};
}

inline void to_json(nlohmann::json& j, const NullTable& t) {
  j = nlohmann::json{{"format", "qqlineup.null_table"},
                     {"version", NullTable::kFormatVersion},
                     {"method", to_string(t.method)},
                     {"n", t.n},
                     {"reps", t.reps},
                     {"seed", t.seed},
                     {"statistics", t.sorted_statistics}};
}

inline void from_json(const nlohmann::json& j, NullTable& t) {
  if (j.value("format", "") != "qqlineup.null_table") throw UsageError("not a null table file");
  if (j.at("version").get<int>() != NullTable::kFormatVersion)
    throw UsageError("unsupported null table version " + j.at("version").dump());
  t.method = parse_method(j.at("method").get<std::string>());
  t.n = j.at("n").get<std::size_t>();
  t.reps = j.at("reps").get<std::size_t>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.sorted_statistics = j.at("statistics").get<std::vector<double>>();
  if (t.sorted_statistics.size() != t.reps) throw UsageError("null table: statistics length != reps");
  if (!std::is_sorted(t.sorted_statistics.begin(), t.sorted_statistics.end()))
    throw UsageError("null table: statistics are not sorted");
}

}  // namespace qqlineup

#endif  // QQLINEUP_NORMALITY_HPP
