#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qqlineup/experiment.hpp"

namespace {

using namespace qqlineup;

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::string out;
  std::string config;
  std::string salt;
  std::optional<std::size_t> mc_reps;
  bool fixed_null = false;
  bool jsonl = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--alpha", c.alpha, "Significance level");
  cmd->add_option("--out", c.out, "Output path");
  cmd->add_option("--config", c.config, "ExperimentConfig JSON file")->check(CLI::ExistingFile);
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(c.config));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("'" + c.config + "': " + e.what());
    }
    cfg = config_from_json(j);
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.alpha) cfg.alpha = *c.alpha;
  if (c.mc_reps) cfg.mc_reps = *c.mc_reps;
  if (c.fixed_null) cfg.fixed_null = true;
  if (!c.salt.empty()) cfg.salt = c.salt;
  return cfg;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

std::string visual_jsonl(const VisualPowerReport& r) {
  std::string out;
  for (const auto& row : r.rows) {
    nlohmann::json j = row.result;
    j["record"] = "lineup";
    j["df"] = row.df;
    j["n"] = row.n;
    j["design"] = to_string(row.design);
    j["sw_p_value"] = row.sw_p_value;
    out += j.dump() + "\n";
  }
  for (const auto& p : r.power.records) {
    nlohmann::json j = p;
    j["record"] = "power";
    out += j.dump() + "\n";
  }
  for (const auto& s : r.skipped) out += nlohmann::json{{"record", "skipped"}, {"reason", s}}.dump() + "\n";
  return out;
}

std::string visual_table(const VisualPowerReport& r) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof line, "%-18s %6s %5s %-10s %5s %8s %11s %11s\n", "lineup", "df", "n", "design", "N",
                "y", "visual_p", "sw_p");
  out += line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%-18s %6s %5zu %-10s %5zu %8.2f %11.4g %11.4g\n", row.result.lineup_id.c_str(),
                  format_df(row.df).c_str(), row.n, std::string(to_string(row.design)).c_str(), row.result.N,
                  row.result.y_weighted, row.result.p_value, row.sw_p_value);
    out += line;
  }
  out += "\n" + power_report_table(r.power);
  if (!r.skipped.empty()) {
    out += "\nskipped records:\n";
    for (const auto& s : r.skipped) out += "  " + s + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Q-Q plot lineup experiments: generation, classical power and visual inference"};
  app.require_subcommand(1);

  Common gen, cls, vis, cal;

  auto* g = app.add_subcommand("generate", "Render the factorial set of lineups and a private manifest");
  add_common(g, gen);
  g->add_option("--salt", gen.salt, "Answer-key salt (derived from the seed when omitted)");

  auto* c = app.add_subcommand("classical-power", "Monte Carlo power of the classical normality tests");
  add_common(c, cls);
  c->add_option("--mc-reps", cls.mc_reps, "Samples per (df, n) cell");
  c->add_flag("--fixed-null", cls.fixed_null, "Also run KS against N(0, 1)");
  c->add_flag("--jsonl", cls.jsonl, "Print JSONL instead of a table");

  std::string evaluations, manifest;
  auto* v = app.add_subcommand("visual-power", "Score collected evaluations against a private manifest");
  add_common(v, vis);
  v->add_option("--evaluations", evaluations, "Evaluations, one JSON object per line")->required();
  v->add_option("--manifest", manifest, "manifest.private.json from generate")->required();
  v->add_flag("--jsonl", vis.jsonl, "Print JSONL instead of a table");

  std::string method = "LF";
  std::size_t n = 0, reps = 10000;
  auto* k = app.add_subcommand("calibrate", "Simulate a null distribution table");
  add_common(k, cal);
  k->add_option("--method", method, "KS, LF, AD, CVM or SW");
  k->add_option("--n", n, "Sample size")->required();
  k->add_option("--reps", reps, "Null replicates (at least 1000)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*g) {
      const auto cfg = resolve(gen);
      if (gen.out.empty()) throw UsageError("generate: --out <dir> is required");
      const auto res = cmd_generate(cfg, gen.out);
      std::printf("wrote %zu lineups (%zu data samples, %zu data sets) to %s\n", res.lineups.size(), res.data_samples,
                  res.data_sets, gen.out.c_str());
      std::printf("%s/manifest.private.json is PRIVATE (answer keys)\n", gen.out.c_str());
    } else if (*c) {
      const auto cfg = resolve(cls);
      const auto report = cmd_classical_power(cfg);
      const std::string jsonl = power_report_jsonl(report);
      if (!cls.out.empty()) write_text_file(cls.out, jsonl);
      std::cout << (cls.jsonl ? jsonl : power_report_table(report));
    } else if (*v) {
      const auto cfg = resolve(vis);
      const auto report = cmd_visual_power(evaluations, manifest, cfg.alpha);
      for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      if (!vis.out.empty()) write_text_file(vis.out, visual_jsonl(report));
      std::cout << (vis.jsonl ? visual_jsonl(report) : visual_table(report));
    } else if (*k) {
      const auto cfg = resolve(cal);
      const auto cal_result = cmd_calibrate(parse_method(method), n, reps, cfg.seed, cal.out);
      for (const auto& [a, crit] : cal_result.critical_values) std::printf("alpha=%g critical=%.6f\n", a, crit);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
