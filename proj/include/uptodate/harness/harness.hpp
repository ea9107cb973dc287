#pragma once

// Seeded, resumable (scenario x method x round) experiment runner with an
// NDJSON results file and per-method aggregation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "uptodate/core/types.hpp"

namespace uptodate::harness {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct CorruptResultsFile : std::runtime_error {
  CorruptResultsFile(const std::filesystem::path& path, std::size_t line, const std::string& why);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A scenario method failed; the message names the cell.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MixedScenarios : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MethodInfo {
  std::string id;
  std::string display;
};

struct MetricInfo {
  std::string key;
  std::string header;  // table short-name; empty for auxiliary metrics
};

/// Mean of `value` over the records whose `condition` metric is nonzero.
struct ConditionalMetric {
  std::string key;
  std::string value;
  std::string condition;
};

struct Scenario {
  std::string id;
  std::vector<MethodInfo> methods;  // table row order
  std::vector<MetricInfo> metrics;  // table columns first, then auxiliary
  std::vector<ConditionalMetric> conditional;
  /// Throws std::invalid_argument on bad parameters.
  std::function<void(const nlohmann::json& params)> validate;
  std::function<core::MetricMap(const std::string& method, const nlohmann::json& params,
                                 std::uint64_t seed)>
      run;

  std::vector<MetricInfo> table_columns() const;
  const MethodInfo& method(std::string_view id) const;
};

std::vector<std::string> scenario_ids();
/// Adds a scenario beyond the four built-in ones. Not thread-safe.
void register_scenario(Scenario s);
/// Throws ConfigError for an unknown id.
const Scenario& scenario(std::string_view id);

struct ExperimentConfig {
  std::string scenario;
  std::vector<std::string> methods;  // empty means every method of the scenario
  int rounds = 30;
  std::uint64_t base_seed = 7;
  nlohmann::json parameters = nlohmann::json::object();
  std::filesystem::path output = "results.ndjson";
};

/// Strict: unknown keys and invalid values raise ConfigError naming the problem.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Checks the scenario, fills in the default method list, validates parameters.
void validate_config(ExperimentConfig& config);

struct RoundRecord {
  std::string scenario;
  std::string method;
  int round_index = 0;
  std::uint64_t seed = 0;
  core::MetricMap metrics;
  bool completed = false;
  std::int64_t wall_time_ms = 0;

  bool operator==(const RoundRecord&) const = default;
};

/// One line, no trailing newline, fields in the documented order.
std::string serialize_record(const RoundRecord& record);
/// Throws std::invalid_argument on anything but an exact record object.
RoundRecord parse_record(std::string_view line);

struct ResultsFile {
  std::vector<RoundRecord> records;
  std::uintmax_t valid_bytes = 0;  // prefix made of complete, parseable lines
  bool partial_tail = false;       // an unterminated, unparseable last line follows
};

/// Missing file reads as empty. A bad newline-terminated line raises CorruptResultsFile.
ResultsFile read_results(const std::filesystem::path& path);

struct AggregateRow {
  std::string method;
  std::string display;
  std::size_t count = 0;
  core::MetricMap mean;
  core::MetricMap sd;
};

struct AggregateTable {
  std::string scenario;
  std::vector<AggregateRow> rows;  // table row order

  const AggregateRow* row(std::string_view method) const;
};

/// Means over completed records, first record per (method, round) cell.
AggregateTable aggregate(const std::vector<RoundRecord>& records);

struct RunOptions {
  bool resume = true;
  /// Stop after this many new cells (simulated interruption).
  std::optional<std::size_t> max_new_cells;
  /// Milliseconds; wall_time_ms is the difference around a cell.
  std::function<std::int64_t()> clock;
  std::function<void(const RoundRecord&)> on_record;
};

struct RunSummary {
  std::size_t appended = 0;
  std::size_t skipped = 0;
  bool interrupted = false;
  bool truncated_tail = false;
};

AggregateTable run_experiment(ExperimentConfig config, const RunOptions& options = {},
                              RunSummary* summary = nullptr);

}  // namespace uptodate::harness
