#ifndef QQLINEUP_EXPERIMENT_HPP
#define QQLINEUP_EXPERIMENT_HPP

// Study harness: factorial lineup generation, Monte Carlo power of the
// classical tests, visual power from collected evaluations, and null table
// calibration. The CLI is a thin wrapper over these functions.

#include <sys/stat.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <atomic>
#include <set>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "qqlineup/error.hpp"
#include "qqlineup/lineup.hpp"
#include "qqlineup/normality.hpp"
#include "qqlineup/sample.hpp"
#include "qqlineup/svg.hpp"
#include "qqlineup/visual.hpp"

namespace qqlineup {

struct ExperimentConfig {
  std::vector<double> dfs{2, 5, 10};
  std::vector<std::size_t> ns{20, 30, 50, 75};
  std::vector<QQDesign> designs{QQDesign::Control, QQDesign::Standard, QQDesign::Detrended};
  std::size_t data_reps = 2;
  std::size_t null_sets = 2;
  NullHypothesis hypothesis = NullHypothesis::ScaledNormal;
  std::uint64_t seed = 20140908;
  double alpha = 0.05;
  std::size_t mc_reps = 2000;
  std::size_t m = 20;
  std::size_t table_reps = 10000;  // Lilliefors null table size
  bool fixed_null = false;         // also run KS against N(0, 1)
  std::string salt;                // answer-key salt; derived from the seed when empty

  void validate(bool for_power = false) const {
    if (dfs.empty() || ns.empty() || designs.empty()) throw UsageError("config: dfs, ns and designs must be non-empty");
    if (data_reps == 0 || null_sets == 0) throw UsageError("config: data_reps and null_sets must be positive");
    for (double df : dfs)
      if (!(df > 0.0)) throw UsageError("config: degrees of freedom must be positive");
    for (auto n : ns)
      if (n < 4) throw UsageError("config: sample sizes must be at least 4");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("config: alpha must lie in (0, 1)");
    if (m < 2) throw UsageError("config: m must be at least 2");
    if (for_power && mc_reps < 100) throw UsageError("config: mc_reps must be at least 100 for power commands");
    if (table_reps < 1000) throw UsageError("config: table_reps must be at least 1000");
  }

  [[nodiscard]] std::size_t lineup_count() const {
    return dfs.size() * ns.size() * data_reps * null_sets * designs.size();
  }

  [[nodiscard]] std::string effective_salt() const {
    return salt.empty() ? sha256_hex("qqlineup-salt|" + std::to_string(seed)) : salt;
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  std::vector<std::string> designs;
  for (auto d : c.designs) designs.emplace_back(to_string(d));
  j = nlohmann::json{{"dfs", c.dfs},
                     {"ns", c.ns},
                     {"designs", designs},
                     {"data_reps", c.data_reps},
                     {"null_sets", c.null_sets},
                     {"hypothesis", to_string(c.hypothesis)},
                     {"seed", c.seed},
                     {"alpha", c.alpha},
                     {"mc_reps", c.mc_reps},
                     {"m", c.m},
                     {"table_reps", c.table_reps},
                     {"fixed_null", c.fixed_null}};
}

/// Fields absent from `j` keep their defaults.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  try {
    if (j.contains("dfs")) c.dfs = j.at("dfs").get<std::vector<double>>();
    if (j.contains("ns")) c.ns = j.at("ns").get<std::vector<std::size_t>>();
    if (j.contains("designs")) {
      c.designs.clear();
      for (const auto& d : j.at("designs")) c.designs.push_back(parse_design(d.get<std::string>()));
    }
    if (j.contains("data_reps")) c.data_reps = j.at("data_reps").get<std::size_t>();
    if (j.contains("null_sets")) c.null_sets = j.at("null_sets").get<std::size_t>();
    if (j.contains("hypothesis")) c.hypothesis = parse_hypothesis(j.at("hypothesis").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("mc_reps")) c.mc_reps = j.at("mc_reps").get<std::size_t>();
    if (j.contains("m")) c.m = j.at("m").get<std::size_t>();
    if (j.contains("table_reps")) c.table_reps = j.at("table_reps").get<std::size_t>();
    if (j.contains("fixed_null")) c.fixed_null = j.at("fixed_null").get<bool>();
    if (j.contains("salt")) c.salt = j.at("salt").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

inline std::string format_df(double df) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", df);
  return buf;
}

// --- power reports --------------------------------------------------------

struct PowerRecord {
  double df = 0.0;
  std::size_t n = 0;
  std::string method;  // test name or Q-Q design
  std::size_t reps = 0;
  std::size_t rejections = 0;
  double power = 0.0;
  double se = 0.0;
};

inline double binomial_se(double p, std::size_t reps) {
  return reps == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
}

inline PowerRecord make_power_record(double df, std::size_t n, std::string method, std::size_t rejections,
                                     std::size_t reps) {
  const double p = reps == 0 ? 0.0 : static_cast<double>(rejections) / static_cast<double>(reps);
  return {df, n, std::move(method), reps, rejections, p, binomial_se(p, reps)};
}

struct PowerReport {
  std::vector<PowerRecord> records;

  [[nodiscard]] const PowerRecord& at(double df, std::size_t n, std::string_view method) const {
    for (const auto& r : records)
      if (r.df == df && r.n == n && r.method == method) return r;
    throw UsageError("power report has no cell df=" + format_df(df) + " n=" + std::to_string(n) + " method=" +
                     std::string(method));
  }
};

inline void to_json(nlohmann::json& j, const PowerRecord& r) {
  j = nlohmann::json{{"df", r.df},   {"n", r.n},         {"method", r.method}, {"reps", r.reps},
                     {"rejections", r.rejections}, {"power", r.power}, {"se", r.se}};
}

inline std::string power_report_jsonl(const PowerReport& report) {
  std::string out;
  for (const auto& r : report.records) out += nlohmann::json(r).dump() + "\n";
  return out;
}

inline std::string power_report_table(const PowerReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%6s %5s %-10s %7s %8s %8s\n", "df", "n", "method", "reps", "power", "se");
  out += line;
  for (const auto& r : report.records) {
    std::snprintf(line, sizeof line, "%6s %5zu %-10s %7zu %8.4f %8.4f\n", format_df(r.df).c_str(), r.n,
                  r.method.c_str(), r.reps, r.power, r.se);
    out += line;
  }
  return out;
}

// --- null tables ----------------------------------------------------------

/// Thread-safe memo of Monte Carlo null tables keyed by (method, n).
class NullTableCache {
 public:
  NullTableCache(std::size_t reps, std::uint64_t seed) : reps_(reps), seed_(seed) {}

  const NullTable& get(Method method, std::size_t n) {
    const auto key = std::make_pair(method, n);
    {
      std::lock_guard lock(mutex_);
      if (auto it = tables_.find(key); it != tables_.end()) return it->second;
    }
    NullTable t = build_null_table(method, n, reps_, RngStream{seed_, "null-tables"});
    std::lock_guard lock(mutex_);
    return tables_.try_emplace(key, std::move(t)).first->second;
  }

 private:
  std::size_t reps_;
  std::uint64_t seed_;
  std::mutex mutex_;
  std::map<std::pair<Method, std::size_t>, NullTable> tables_;
};

struct Calibration {
  NullTable table;
  std::vector<std::pair<double, double>> critical_values;  // (alpha, critical value)
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline NullTable load_null_table(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text_file(path)).get<NullTable>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + path.string() + "': " + e.what());
  }
}

/// Builds a null table and, when `out` is non-empty, writes it as JSON.
inline Calibration cmd_calibrate(Method method, std::size_t n, std::size_t reps, std::uint64_t seed,
                                 const std::filesystem::path& out) {
  Calibration c{build_null_table(method, n, reps, RngStream{seed, "null-tables"}), {}};
  for (double a : kReportedAlphas) c.critical_values.emplace_back(a, c.table.critical_value(a));
  if (!out.empty()) write_text_file(out, nlohmann::json(c.table).dump() + "\n");
  return c;
}

// --- classical power ------------------------------------------------------

namespace detail {

template <class Fn>
auto parallel_map(std::size_t count, Fn&& fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(count);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));
  std::vector<std::future<void>> jobs;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < workers; ++w)
    jobs.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) out[i] = fn(i);
    }));
  for (auto& j : jobs) j.get();
  return out;
}

}  // namespace detail

inline std::vector<std::string> classical_methods(bool fixed_null) {
  std::vector<std::string> m{"SW", "AD", "LF", "KS", "CVM"};
  if (fixed_null) m.emplace_back("KS_FIXED");
  return m;
}

/// Rejection fractions of every classical test on t(df) samples of size n,
/// parameters estimated from each sample. Cells use independent streams,
/// so the report does not depend on scheduling.
inline PowerReport cmd_classical_power(const ExperimentConfig& config, NullTableCache* tables = nullptr) {
  config.validate(true);
  NullTableCache local(config.table_reps, config.seed);
  NullTableCache& cache = tables ? *tables : local;
  for (auto n : config.ns) cache.get(Method::LF, n);

  std::vector<std::pair<double, std::size_t>> cells;
  for (double df : config.dfs)
    for (auto n : config.ns) cells.emplace_back(df, n);
  const auto methods = classical_methods(config.fixed_null);

  auto per_cell = detail::parallel_map(cells.size(), [&](std::size_t c) {
    const auto [df, n] = cells[c];
    const NullTable& lf = cache.get(Method::LF, n);
    const RngStream cell{config.seed, "power/df=" + format_df(df) + "/n=" + std::to_string(n)};
    std::vector<std::size_t> rejections(methods.size(), 0);
    for (std::size_t r = 0; r < config.mc_reps; ++r) {
      const SampleVector x = sample_t(cell.child(std::to_string(r)), n, df);
      const double p[] = {sw_test(x).p_value, ad_test(x).p_value, lilliefors_test(x, lf).p_value,
                          ks_test_estimated(x).p_value, cvm_test(x).p_value,
                          config.fixed_null ? ks_test(x, 0.0, 1.0).p_value : 1.0};
      for (std::size_t k = 0; k < methods.size(); ++k)
        if (p[k] <= config.alpha) ++rejections[k];
    }
    std::vector<PowerRecord> recs;
    for (std::size_t k = 0; k < methods.size(); ++k)
      recs.push_back(make_power_record(df, n, methods[k], rejections[k], config.mc_reps));
    return recs;
  });

  PowerReport report;
  for (auto& v : per_cell)
    for (auto& r : v) report.records.push_back(std::move(r));
  return report;
}

// --- factorial generation -------------------------------------------------

struct GeneratedLineup {
  std::string id;
  double df = 0.0;
  std::size_t n = 0;
  std::size_t data_rep = 0;  // 1-based
  std::size_t null_set = 0;  // 1-based
  QQDesign design = QQDesign::Standard;
  std::string data_id;  // fingerprint of the data sample
  nlohmann::json private_record;
};

struct GenerateResult {
  std::vector<GeneratedLineup> lineups;
  nlohmann::json manifest;
  std::size_t data_samples = 0;
  std::size_t data_sets = 0;  // distinct (data sample, null set) pairs
};

inline constexpr std::string_view kPrivateWarning =
    "PRIVATE: contains answer keys and raw data. Do not publish or serve to observers.";

inline SampleVector factorial_data_sample(const ExperimentConfig& c, double df, std::size_t n, std::size_t rep) {
  return sample_t(RngStream{c.seed, "data/df=" + format_df(df) + "/n=" + std::to_string(n) + "/rep=" + std::to_string(rep)},
                  n, df);
}

inline std::uint64_t factorial_null_seed(const ExperimentConfig& c, double df, std::size_t n, std::size_t rep,
                                         std::size_t null_set) {
  return derive_seed(c.seed, "nullset/df=" + format_df(df) + "/n=" + std::to_string(n) + "/rep=" + std::to_string(rep) +
                                 "/set=" + std::to_string(null_set));
}

/// Builds every lineup of the factorial design in memory. The same data
/// sample and null set are rendered once per design.
inline GenerateResult generate_lineups(const ExperimentConfig& config,
                                       const std::function<void(const Lineup&, const GeneratedLineup&)>& sink = {}) {
  config.validate();
  const std::string salt = config.effective_salt();
  GenerateResult res;
  std::set<std::string> data_ids;
  std::set<std::pair<std::string, std::size_t>> data_sets;
  nlohmann::json entries = nlohmann::json::array();
  for (double df : config.dfs) {
    for (auto n : config.ns) {
      for (std::size_t rep = 1; rep <= config.data_reps; ++rep) {
        const SampleVector data = factorial_data_sample(config, df, n, rep);
        const std::string data_id = data_fingerprint(data).substr(0, 16);
        data_ids.insert(data_id);
        for (std::size_t set = 1; set <= config.null_sets; ++set) {
          data_sets.emplace(data_id, set);
          for (QQDesign design : config.designs) {
            LineupSpec spec{.m = config.m,
                            .design = design,
                            .hypothesis = config.hypothesis,
                            .data = data,
                            .seed = factorial_null_seed(config, df, n, rep, set),
                            .allow_multiple_select = set % 2 == 0};
            const Lineup l = assemble_lineup(std::move(spec), LineupOptions{{}, salt});
            GeneratedLineup g{l.id, df, n, rep, set, design, data_id, to_private_json(l)};
            g.private_record["cell"] = {{"df", df}, {"n", n}, {"data_rep", rep}, {"null_set", set}, {"data_id", data_id}};
            if (sink) sink(l, g);
            entries.push_back(g.private_record);
            res.lineups.push_back(std::move(g));
          }
        }
      }
    }
  }
  res.data_samples = data_ids.size();
  res.data_sets = data_sets.size();
  res.manifest = nlohmann::json{{"warning", kPrivateWarning},
                                {"format", "qqlineup.manifest"},
                                {"version", 1},
                                {"config", config},
                                {"salt", salt},
                                {"counts",
                                 {{"lineups", res.lineups.size()},
                                  {"data_samples", res.data_samples},
                                  {"data_sets", res.data_sets}}},
                                {"lineups", std::move(entries)}};
  return res;
}

/// Writes <out>/lineups/<id>.svg, <out>/lineups/<id>.json (public) and the
/// private manifest <out>/manifest.private.json (mode 0600).
inline GenerateResult cmd_generate(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "lineups", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "lineups").string() + "': " + ec.message());
  auto res = generate_lineups(config, [&](const Lineup& l, const GeneratedLineup&) {
    write_text_file(out_dir / "lineups" / (l.id + ".svg"), render_svg(l, default_layout(l.spec.m)));
    write_text_file(out_dir / "lineups" / (l.id + ".json"), to_public_json(l).dump() + "\n");
  });
  const fs::path manifest = out_dir / "manifest.private.json";
  nlohmann::ordered_json ordered{{"warning", kPrivateWarning}};
  for (const auto& [k, v] : res.manifest.items())
    if (k != "warning") ordered[k] = v;
  write_text_file(manifest, ordered.dump(1) + "\n");
  fs::permissions(manifest, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace, ec);
  if (ec) throw IoError("cannot restrict permissions on '" + manifest.string() + "': " + ec.message());
  return res;
}

// --- visual power ---------------------------------------------------------

struct VisualPowerRow {
  VisualTestResult result;
  double df = 0.0;
  std::size_t n = 0;
  QQDesign design = QQDesign::Standard;
  double sw_p_value = 1.0;
};

struct VisualPowerReport {
  PowerReport power;  // per (df, n, design): fraction of lineups rejected
  std::vector<VisualPowerRow> rows;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
};

/// Parses JSON-lines evaluations. Blank lines are ignored; unparsable lines
/// go to `skipped`.
inline std::vector<Evaluation> parse_evaluations_jsonl(const std::string& text, std::vector<std::string>& skipped) {
  std::vector<Evaluation> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(evaluation_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      skipped.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline VisualPowerReport visual_power(const std::vector<Evaluation>& evaluations, const nlohmann::json& manifest,
                                      double alpha, std::vector<std::string> skipped = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("visual-power: alpha must lie in (0, 1)");
  struct Entry {
    const nlohmann::json* record;
    std::vector<Evaluation> evals;
  };
  std::map<std::string, Entry> by_id;
  std::vector<std::string> order;
  for (const auto& rec : manifest.at("lineups")) {
    const auto id = rec.at("id").get<std::string>();
    by_id.emplace(id, Entry{&rec, {}});
    order.push_back(id);
  }
  VisualPowerReport out;
  out.skipped = std::move(skipped);
  for (const auto& e : evaluations) {
    auto it = by_id.find(e.lineup_id);
    if (it == by_id.end()) {
      out.skipped.push_back("unknown lineup id '" + e.lineup_id + "' (observer '" + e.observer_id + "')");
      continue;
    }
    const auto& spec = it->second.record->at("spec");
    try {
      validate_evaluation(e, spec.at("m").get<std::size_t>(), spec.at("allow_multiple_select").get<bool>());
    } catch (const UsageError& ex) {
      out.skipped.push_back("lineup '" + e.lineup_id + "' observer '" + e.observer_id + "': " + ex.what());
      continue;
    }
    it->second.evals.push_back(e);
  }
  if (evaluations.empty()) out.warnings.emplace_back("no evaluations supplied; report is empty");

  std::map<std::tuple<double, std::size_t, std::string>, std::pair<std::size_t, std::size_t>> cells;
  for (const auto& id : order) {
    const auto& entry = by_id.at(id);
    if (entry.evals.empty()) continue;
    const auto& rec = *entry.record;
    const auto& spec = rec.at("spec");
    VisualPowerRow row;
    row.result = aggregate(entry.evals, id, spec.at("m").get<std::size_t>(), rec.at("data_position").get<std::size_t>(),
                           spec.at("allow_multiple_select").get<bool>());
    row.design = parse_design(spec.at("design").get<std::string>());
    if (rec.contains("cell")) {
      row.df = rec["cell"].value("df", 0.0);
      row.n = rec["cell"].value("n", std::size_t{0});
    } else {
      row.n = spec.at("n").get<std::size_t>();
    }
    const SampleVector data(spec.at("data").get<std::vector<double>>());
    try {
      row.sw_p_value = sw_test(data).p_value;
    } catch (const std::exception&) {
      row.sw_p_value = std::numeric_limits<double>::quiet_NaN();
    }
    auto& cell = cells[{row.df, row.n, std::string(to_string(row.design))}];
    ++cell.second;
    if (row.result.p_value <= alpha) ++cell.first;
    out.rows.push_back(std::move(row));
  }
  for (const auto& [key, counts] : cells)
    out.power.records.push_back(
        make_power_record(std::get<0>(key), std::get<1>(key), std::get<2>(key), counts.first, counts.second));
  return out;
}

inline VisualPowerReport cmd_visual_power(const std::filesystem::path& evaluations_file,
                                          const std::filesystem::path& manifest_file, double alpha) {
  std::vector<std::string> skipped;
  const auto evals = parse_evaluations_jsonl(read_text_file(evaluations_file), skipped);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_file));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("'" + manifest_file.string() + "': " + e.what());
  }
  return visual_power(evals, manifest, alpha, std::move(skipped));
}

}  // namespace qqlineup

#endif  // QQLINEUP_EXPERIMENT_HPP
