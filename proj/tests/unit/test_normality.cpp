#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "qqlineup/normality.hpp"

using namespace qqlineup;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> vec(const SampleVector& x) { return {x.values().begin(), x.values().end()}; }

/// x-bar + s * Phi^-1(p_i) for the default plotting positions.
SampleVector ideal_sample(std::size_t n, double mu, double sd) {
  std::vector<double> v;
  for (double p : plotting_positions(n)) v.push_back(mu + sd * oracle::normal_quantile(p));
  return SampleVector(v);
}

double oracle_ad(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double m = 0.0, ss = 0.0;
  for (double v : x) m += v;
  m /= n;
  for (double v : x) ss += (v - m) * (v - m);
  const double s = std::sqrt(ss / (n - 1.0));
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = std::clamp(oracle::normal_cdf((x[i] - m) / s), 1e-15, 1 - 1e-15);
    const double hi = std::clamp(oracle::normal_cdf((x[x.size() - 1 - i] - m) / s), 1e-15, 1 - 1e-15);
    acc += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log1p(-hi));
  }
  return -n - acc / n;
}

double oracle_cvm(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double m = 0.0, ss = 0.0;
  for (double v : x) m += v;
  m /= n;
  for (double v : x) ss += (v - m) * (v - m);
  const double s = std::sqrt(ss / (n - 1.0));
  double acc = 1.0 / (12.0 * n);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = oracle::normal_cdf((x[i] - m) / s) - (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n);
    acc += d * d;
  }
  return acc;
}

double uniform_ks_distance(std::vector<double> p) {
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    d = std::max({d, static_cast<double>(i + 1) / n - p[i], p[i] - static_cast<double>(i) / n});
  return d;
}

const NullTable& lf_table_30() {
  static const NullTable t = build_null_table(Method::LF, 30, 10000, RngStream{20140908, "null-tables"});
  return t;
}

}  // namespace

TEST_CASE("ks_statistic spot values and invariance", "[ks]") {
  const SampleVector x({-1, 0, 1});
  CHECK_THAT(ks_statistic(x, 0, 1), WithinAbs(0.17466, 1e-4));
  CHECK_THAT(ks_statistic(x, 0, 1), WithinAbs(oracle::ks_distance(vec(x), 0, 1), 1e-13));
  for (std::size_t n : {3, 10, 25, 100}) {
    std::vector<double> v;
    for (double p : plotting_positions(n, PlottingRule::Hazen)) v.push_back(normal_quantile(p));
    CHECK_THAT(ks_statistic(SampleVector(v), 0, 1), WithinAbs(0.5 / static_cast<double>(n), 1e-12));
  }
  const auto t = sample_t(RngStream{1, "ks"}, 40, 3.0);
  CHECK_THAT(ks_statistic(t.affine(0, 2), 0, 2), WithinAbs(ks_statistic(t, 0, 1), 1e-14));
  CHECK_THAT(ks_statistic(t, 0.3, 1.7), WithinAbs(oracle::ks_distance(vec(t), 0.3, 1.7), 1e-13));
  CHECK_THROWS_AS(ks_statistic(t, 0, 0), DomainError);
  CHECK_THROWS_AS(ks_statistic(t, 0, -1), DomainError);
}

TEST_CASE("Kolmogorov survival function", "[ks]") {
  // Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2); 1.358099 is the classical 5% point.
  CHECK_THAT(kolmogorov_sf(1.358099), WithinAbs(0.05, 1e-6));
  CHECK_THAT(kolmogorov_sf(1.627624), WithinAbs(0.01, 1e-6));
  CHECK(kolmogorov_sf(0.0) == 1.0);
  const auto r = ks_test(SampleVector({-1, 0, 1}), 0, 1);
  CHECK(r.p_value > 0.9);
  CHECK_FALSE(r.params_estimated);
}

TEST_CASE("Lilliefors test against a simulated null table", "[lf]") {
  const NullTable& t = lf_table_30();
  CHECK(t.sorted_statistics.size() == 10000);
  CHECK(std::is_sorted(t.sorted_statistics.begin(), t.sorted_statistics.end()));
  // Median 0.107 and upper quantiles frozen from an independent NumPy/SciPy
  // simulation (20,000 reps); 0.131 and 0.161 are Lilliefors' published
  // 20% and 5% points for n = 30.
  CHECK_THAT(sample_quantile(SampleVector(t.sorted_statistics), 0.5), WithinAbs(0.107, 0.005));
  CHECK_THAT(t.critical_value(0.20), WithinAbs(0.131, 0.004));
  CHECK_THAT(t.critical_value(0.05), WithinAbs(0.161, 0.004));

  const auto ideal = ideal_sample(30, 4.0, 2.5);
  const auto best = lilliefors_test(ideal, t);
  CHECK(best.p_value > 0.5);
  CHECK(best.params_estimated);
  CHECK(best.statistic < t.sorted_statistics[t.sorted_statistics.size() / 10]);

  const auto wild = SampleVector({0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 100});
  const auto worst = lilliefors_test(wild, t);
  CHECK(worst.p_value > 0.0);
  CHECK_THAT(worst.p_value, WithinAbs(1.0 / 10001.0, 1e-15));

  const auto x29 = sample_normal(RngStream{1, "x"}, 29);
  CHECK_THROWS_AS(lilliefors_test(x29, t), UsageError);
  NullTable wrong = t;
  wrong.method = Method::AD;
  CHECK_THROWS_AS(lilliefors_test(sample_normal(RngStream{1, "x"}, 30), wrong), UsageError);
}

TEST_CASE("null tables are deterministic and round trip through JSON", "[table]") {
  const auto a = build_null_table(Method::AD, 12, 1000, RngStream{5, "t"});
  const auto b = build_null_table(Method::AD, 12, 1000, RngStream{5, "t"});
  CHECK(a.sorted_statistics == b.sorted_statistics);
  const nlohmann::json j = a;
  CHECK(j.dump() == nlohmann::json(b).dump());
  const auto back = j.get<NullTable>();
  CHECK(back.sorted_statistics == a.sorted_statistics);
  CHECK(back.method == Method::AD);
  nlohmann::json bad = j;
  bad["version"] = 99;
  CHECK_THROWS_AS(bad.get<NullTable>(), UsageError);
  CHECK_THROWS_AS(build_null_table(Method::LF, 30, 10, RngStream{1, ""}), UsageError);
}

TEST_CASE("Anderson-Darling statistic matches the computational form", "[ad]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = sample_t(RngStream{seed, "ad"}, 10 + 3 * seed, 2.0);
    REQUIRE_THAT(ad_statistic(x), WithinRel(oracle_ad(vec(x)), 1e-10));
  }
  // Extreme outlier drives F to the clamp rather than to log(0).
  std::vector<double> v(20, 0.0);
  for (int i = 0; i < 20; ++i) v[i] = i * 0.01;
  v.back() = 1e6;
  const auto r = ad_test(SampleVector(v));
  CHECK(std::isfinite(r.statistic));
  CHECK(r.p_value >= 0.0);
  CHECK(r.p_value < 1e-3);
}

TEST_CASE("Anderson-Darling p-value pieces", "[ad]") {
  // D'Agostino & Stephens case 3 thresholds on the modified statistic.
  CHECK_THAT(ad_p_value(0.752 / (1 + 0.75 / 1e6), 1000000), WithinAbs(0.05, 0.002));
  CHECK_THAT(ad_p_value(1.035 / (1 + 0.75 / 1e6), 1000000), WithinAbs(0.01, 0.0005));
  double prev = 1.0;
  for (double a = 0.05; a < 5.0; a += 0.01) {
    const double p = ad_p_value(a, 30);
    REQUIRE(p <= prev + 1e-12);
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
    prev = p;
  }
  const auto ideal = ideal_sample(30, 0, 1);
  const auto tab = build_null_table(Method::AD, 30, 2000, RngStream{2, "ad"});
  CHECK(ad_statistic(ideal) < tab.sorted_statistics[1000]);
}

TEST_CASE("heavy tails inflate the AD statistic", "[ad]") {
  double t2 = 0.0, norm = 0.0;
  for (int r = 0; r < 500; ++r) {
    t2 += ad_statistic(sample_t(RngStream{9, "t2/" + std::to_string(r)}, 50, 2.0));
    norm += ad_statistic(sample_normal(RngStream{9, "n/" + std::to_string(r)}, 50));
  }
  CHECK(t2 > norm * 1.5);
}

TEST_CASE("Cramer-von Mises statistic", "[cvm]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = sample_t(RngStream{seed, "cvm"}, 8 + 4 * seed, 4.0);
    REQUIRE_THAT(cvm_statistic(x), WithinRel(oracle_cvm(vec(x)), 1e-10));
    REQUIRE(cvm_statistic(x) > 0.0);
  }
  // With the mean/sd of the sample pinned, F(x(i)) = (2i-1)/(2n) exactly leaves only 1/(12n).
  const std::size_t n = 6;
  std::vector<double> z;
  for (std::size_t i = 1; i <= n; ++i) z.push_back(normal_quantile((2.0 * i - 1.0) / (2.0 * n)));
  double m = 0, ss = 0;
  for (double v : z) m += v;
  m /= n;
  for (double v : z) ss += (v - m) * (v - m);
  const double s = std::sqrt(ss / (n - 1));
  std::vector<double> x;
  for (double v : z) x.push_back(m + s * v);
  // Rescaling by s keeps the standardized values equal to z only when s == 1,
  // so compare against the oracle with the general form instead.
  CHECK_THAT(cvm_statistic(SampleVector(x)), WithinRel(oracle_cvm(x), 1e-12));
  CHECK(cvm_statistic(SampleVector(x)) >= 1.0 / (12.0 * n));
  double prev = 1.0;
  for (double w = 0.0; w < 1.5; w += 0.002) {
    const double p = cvm_p_value(w, 30);
    REQUIRE(p <= prev + 1e-12);
    REQUIRE(p >= 0.0);
    prev = p;
  }
}

TEST_CASE("Shapiro-Wilk spot values", "[sw]") {
  const auto r3 = sw_test(SampleVector({1, 2, 3}));
  CHECK_THAT(r3.statistic, WithinAbs(1.0, 1e-9));
  CHECK_THAT(r3.p_value, WithinAbs(1.0, 1e-9));
  const auto a3 = shapiro_wilk_coefficients(3);
  CHECK_THAT(a3[2], WithinAbs(std::sqrt(0.5), 1e-12));
  CHECK(a3[1] == 0.0);

  // n = 3 has the exact null law p = (6/pi)(asin sqrt W - asin sqrt(3/4)).
  const auto x3 = SampleVector({0.0, 0.1, 1.0});
  const auto s3 = sw_test(x3);
  CHECK_THAT(s3.p_value, WithinAbs(6.0 / std::numbers::pi *
                                       (std::asin(std::sqrt(s3.statistic)) - std::asin(std::sqrt(0.75))),
                                   1e-9));

  // Royston (1995) worked example, 25 observations: W = 0.83467, p = 0.000914.
  const SampleVector d({.139, .157, .175, .256, .344, .413, .503, .577, .614, .655, .954, 1.392, 1.557, 1.648, 1.690,
                        1.994, 2.174, 2.206, 3.245, 3.510, 3.571, 4.354, 4.980, 6.084, 8.351});
  const auto r = sw_test(d);
  CHECK_THAT(r.statistic, WithinAbs(0.83467, 5e-5));
  CHECK_THAT(r.p_value, WithinAbs(0.000914, 5e-6));
}

TEST_CASE("Shapiro-Wilk domain", "[sw]") {
  CHECK_THROWS_AS(sw_test(SampleVector({1, 2})), UsageError);
  CHECK_THROWS_AS(shapiro_wilk_coefficients(5001), UsageError);
  CHECK_THROWS_AS(sw_test(SampleVector({2, 2, 2, 2})), DegenerateInputError);
  for (std::size_t n : {3, 4, 5, 11, 12, 50, 500, 5000}) {
    const auto a = shapiro_wilk_coefficients(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ss += a[i] * a[i];
      REQUIRE_THAT(a[i], WithinAbs(-a[n - 1 - i], 1e-15));
    }
    REQUIRE_THAT(ss, WithinAbs(1.0, 1e-9));
  }
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto x = sample_t(RngStream{seed, "w"}, 3 + seed * 7, 3.0);
    const auto r = sw_test(x);
    REQUIRE(r.statistic > 0.0);
    REQUIRE(r.statistic <= 1.0);
    REQUIRE(r.p_value >= 0.0);
    REQUIRE(r.p_value <= 1.0);
  }
}

TEST_CASE("estimated-parameter tests are affine invariant", "[invariance]") {
  const NullTable& t = lf_table_30();
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto x = sample_t(RngStream{seed, "aff"}, 30, 3.0);
    const auto y = x.affine(-7.25, 3.5);
    REQUIRE_THAT(sw_test(y).statistic, WithinAbs(sw_test(x).statistic, 1e-12));
    REQUIRE_THAT(sw_test(y).p_value, WithinAbs(sw_test(x).p_value, 1e-10));
    REQUIRE_THAT(ad_test(y).statistic, WithinAbs(ad_test(x).statistic, 1e-9));
    REQUIRE_THAT(ad_test(y).p_value, WithinAbs(ad_test(x).p_value, 1e-9));
    REQUIRE_THAT(cvm_test(y).statistic, WithinAbs(cvm_test(x).statistic, 1e-10));
    REQUIRE_THAT(cvm_test(y).p_value, WithinAbs(cvm_test(x).p_value, 1e-9));
    REQUIRE_THAT(lilliefors_test(y, t).statistic, WithinAbs(lilliefors_test(x, t).statistic, 1e-12));
    REQUIRE_THAT(ks_test_estimated(y).p_value, WithinAbs(ks_test_estimated(x).p_value, 1e-10));
  }
}

TEST_CASE("null p-values are close to uniform at n=30", "[calibration]") {
  const NullTable& t = lf_table_30();
  std::vector<double> sw, ad, cvm, lf;
  std::size_t rej[4] = {0, 0, 0, 0};
  const std::size_t reps = 10000;
  const RngStream base{777, "calibration"};
  for (std::size_t r = 0; r < reps; ++r) {
    const auto x = sample_normal(base.child(std::to_string(r)), 30);
    sw.push_back(sw_test(x).p_value);
    ad.push_back(ad_test(x).p_value);
    cvm.push_back(cvm_test(x).p_value);
    lf.push_back(lilliefors_test(x, t).p_value);
    rej[0] += sw.back() <= 0.05;
    rej[1] += ad.back() <= 0.05;
    rej[2] += cvm.back() <= 0.05;
    rej[3] += lf.back() <= 0.05;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    INFO("method " << k << " rejections " << rej[k]);
    CHECK_THAT(rej[k] / static_cast<double>(reps), WithinAbs(0.05, 0.007));
  }
  // The AD/CvM p-value formulas are piecewise approximations fitted for
  // the upper tail, so uniformity is checked over the full range for SW and
  // LF and restricted to p <= 0.25 for AD and CvM.
  CHECK(uniform_ks_distance(sw) < 0.02);
  CHECK(uniform_ks_distance(lf) < 0.02);
  auto tail_gap = [&](const std::vector<double>& p) {
    double worst = 0.0;
    for (double a = 0.01; a <= 0.25; a += 0.01) {
      const double frac = std::count_if(p.begin(), p.end(), [&](double v) { return v <= a; }) / double(reps);
      worst = std::max(worst, std::abs(frac - a));
    }
    return worst;
  };
  CHECK(tail_gap(ad) < 0.02);
  CHECK(tail_gap(cvm) < 0.02);
}

TEST_CASE("SW null table agrees with the Royston p-value crossing", "[calibration]") {
  const auto t = build_null_table(Method::SW, 30, 10000, RngStream{3, "sw"});
  const double w05 = t.critical_value(0.05);
  CHECK_THAT(sw_p_value(w05, 30), WithinAbs(0.05, 0.01));
}

TEST_CASE("TestResult JSON", "[json]") {
  const nlohmann::json j = sw_test(SampleVector({1, 2, 4, 8}));
  CHECK(j.at("method") == "SW");
  CHECK(j.at("n") == 4);
  CHECK(j.at("params_estimated") == true);
  CHECK(parse_method("CvM") == Method::CVM);
  CHECK_THROWS_AS(parse_method("JB"), UsageError);
}
