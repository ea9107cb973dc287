// uptodate: run the four scenarios, render their tables and charts, query the oracles.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "uptodate/feature/feature.hpp"
#include "uptodate/harness/harness.hpp"
#include "uptodate/report/report.hpp"
#include "uptodate/routine/routine.hpp"

namespace fs = std::filesystem;
using namespace uptodate;

namespace {

constexpr int kOk = 0;
constexpr int kIoError = 2;
constexpr int kScenarioError = 3;
constexpr int kOutputError = 4;

struct Flags {
  std::string scenario;
  std::optional<int> rounds;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string config;
  bool csv = false;
  bool quiet = false;
  bool resume = true;
  std::string features = "shape,size";
  int max_len = 8;
  std::string plot_dir = "plots";
};

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("UPTODATE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return seed;
  } catch (const std::exception&) {
    throw harness::ConfigError(std::string("UPTODATE_SEED is not an unsigned integer: ") + v);
  }
}

fs::path results_path(const Flags& f) { return f.out ? fs::path(*f.out) : fs::path("results.ndjson"); }

/// Loads and aggregates an existing results file; empty or missing is an error.
harness::AggregateTable load_aggregate(const fs::path& path) {
  if (!fs::exists(path)) throw harness::ConfigError("results file not found: " + path.string());
  const harness::ResultsFile file = harness::read_results(path);
  if (file.records.empty()) throw harness::ConfigError("results file has no records: " + path.string());
  harness::AggregateTable t = harness::aggregate(file.records);
  if (t.rows.empty()) throw harness::ConfigError("results file has no completed records: " + path.string());
  return t;
}

int cmd_run(const Flags& f) {
  harness::ExperimentConfig cfg;
  if (!f.config.empty()) cfg = harness::load_config(f.config);
  bool seeded = !f.config.empty();
  if (!f.scenario.empty()) {
    if (!f.config.empty() && f.scenario != cfg.scenario)
      throw harness::ConfigError("--scenario " + f.scenario + " conflicts with config scenario " + cfg.scenario);
    cfg.scenario = f.scenario;
  }
  if (cfg.scenario.empty()) throw harness::ConfigError("run needs --scenario or --config");
  if (f.rounds) cfg.rounds = *f.rounds;
  if (f.out) cfg.output = *f.out;
  if (f.seed) {
    cfg.base_seed = *f.seed;
  } else if (!seeded) {
    cfg.base_seed = env_seed().value_or(7);
  }
  harness::validate_config(cfg);

  harness::RunOptions opts;
  opts.resume = f.resume;
  if (!f.quiet) {
    opts.on_record = [](const harness::RoundRecord& r) {
      std::fprintf(stderr, "[%s] %s round %d seed %llu: %lld ms\n", r.scenario.c_str(), r.method.c_str(),
                   r.round_index, static_cast<unsigned long long>(r.seed),
                   static_cast<long long>(r.wall_time_ms));
    };
  }
  harness::RunSummary summary;
  const harness::AggregateTable table = harness::run_experiment(cfg, opts, &summary);
  if (!f.quiet) {
    if (summary.truncated_tail)
      std::fprintf(stderr, "dropped an incomplete trailing record from %s\n", cfg.output.string().c_str());
    std::fprintf(stderr, "%zu new records, %zu cells already complete\n", summary.appended, summary.skipped);
    std::cout << report::render_table(table);
  }
  return kOk;
}

int cmd_report(const Flags& f) {
  const harness::AggregateTable table = load_aggregate(results_path(f));
  if (!f.scenario.empty() && f.scenario != table.scenario)
    throw harness::ConfigError("results file holds scenario " + table.scenario + ", not " + f.scenario);
  std::cout << (f.csv ? report::render_csv(table) : report::render_table(table));
  return kOk;
}

int cmd_plot(const Flags& f) {
  const harness::AggregateTable table = load_aggregate(results_path(f));
  std::error_code ec;
  fs::create_directories(f.plot_dir, ec);
  if (ec) throw harness::OutputError("cannot create plot directory " + f.plot_dir + ": " + ec.message());
  for (const auto& chart : report::charts_for(table)) {
    const fs::path path = fs::path(f.plot_dir) / chart.file_name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << report::render_svg(chart);
    out.close();
    if (!out) throw harness::OutputError("cannot write " + path.string());
    if (!f.quiet) std::fprintf(stderr, "wrote %s\n", path.string().c_str());
  }
  return kOk;
}

int cmd_oracle(const Flags& f) {
  if (f.scenario == "feature") {
    feature::GenerativeSpec spec = feature::GenerativeSpec::calibrated();
    if (!f.config.empty()) spec = feature::config_from_json(harness::load_config(f.config).parameters).spec;
    const feature::FeatureSet set = feature::parse_feature_list(f.features);
    std::printf("%.6f\n", feature::bayes_oracle(spec, set));
    return kOk;
  }
  if (f.scenario == "routine") {
    try {
      const routine::Routine r = routine::minimal_routine_oracle(f.max_len);
      std::string line;
      for (auto a : r) line += (line.empty() ? "" : ",") + std::string(routine::action_name(a));
      std::printf("%s\n", line.c_str());
      std::printf("length %zu\n", r.size());
    } catch (const routine::NoSolution& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kScenarioError;
    }
    return kOk;
  }
  throw harness::ConfigError("oracle needs --scenario feature or --scenario routine");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop learning experiments: run, report, plot, oracle"};
  app.require_subcommand(1);
  Flags f;

  auto* run = app.add_subcommand("run", "Run (or resume) an experiment and append round records");
  run->add_option("--scenario", f.scenario, "feature | openset | routine | evidence");
  run->add_option("--rounds", f.rounds, "Rounds per method (default 30)")->check(CLI::PositiveNumber);
  run->add_option("--seed", f.seed, "Base seed; round i uses seed + i (default $UPTODATE_SEED, then 7)");
  run->add_option("--out", f.out, "Results file (NDJSON)");
  run->add_option("--config", f.config, "Experiment config file (JSON)");
  run->add_flag("--quiet", f.quiet, "No progress and no final table");
  run->add_flag("--resume,!--no-resume", f.resume, "Skip cells already completed in --out (default)");

  auto* rep = app.add_subcommand("report", "Render the aggregate table of a results file");
  rep->add_option("--out", f.out, "Results file (NDJSON)");
  rep->add_option("--scenario", f.scenario, "Expected scenario");
  rep->add_flag("--csv", f.csv, "CSV instead of the aligned table");

  auto* plot = app.add_subcommand("plot", "Write SVG bar charts for a results file");
  plot->add_option("--out", f.out, "Results file (NDJSON)");
  plot->add_option("--plot-dir", f.plot_dir, "Directory for the SVG files (default plots)");
  plot->add_flag("--quiet", f.quiet, "No progress output");

  auto* oracle = app.add_subcommand("oracle", "Brute-force oracles");
  oracle->add_option("--scenario", f.scenario, "feature | routine")->required();
  oracle->add_option("--features", f.features, "Comma-separated feature subset (feature oracle)");
  oracle->add_option("--max-len", f.max_len, "Longest routine to enumerate, at most 8 (routine oracle)");
  oracle->add_option("--config", f.config, "Experiment config whose parameters.spec overrides the shipped spec");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kIoError;
  }

  try {
    if (*run) return cmd_run(f);
    if (*rep) return cmd_report(f);
    if (*plot) return cmd_plot(f);
    if (*oracle) return cmd_oracle(f);
  } catch (const harness::ScenarioError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kScenarioError;
  } catch (const harness::OutputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOutputError;
  } catch (const harness::CorruptResultsFile& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIoError;
  }
  return kOk;
}
