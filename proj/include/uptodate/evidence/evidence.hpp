#pragma once

// Evidence-source selection across three learning tasks, with verification
// feedback driving the selection strategy.

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "uptodate/core/types.hpp"
#include "uptodate/rng.hpp"

namespace uptodate::evidence {

enum class Source {
  Color,
  Shape,
  Texture,
  Position,
  HistSuccessSeq,
  HistFailSeq,
  UnknownClusters,
  RandomNoise,
  PastSimilarTasks,
  PartialInputMatch
};
inline constexpr int kSourceCount = 10;

enum class Pool { Direct, Historical };

enum class Task { ObjectRecognition, RoutineReconstruction, CategoryDiscovery };
inline constexpr int kTaskCount = 3;

std::string_view source_name(Source s);
std::string_view task_name(Task t);
Source parse_source(std::string_view name);
Task parse_task(std::string_view name);
Pool pool_of(Source s);

/// Per-source cost, indexed by Source.
using CostTable = std::array<double, kSourceCount>;
CostTable default_costs();

struct UsefulnessMap {
  std::array<std::set<Source>, kTaskCount> useful;

  static UsefulnessMap shipped();
  const std::set<Source>& of(Task t) const { return useful[static_cast<std::size_t>(t)]; }
  /// Throws std::invalid_argument unless every task has 3 useful sources,
  /// at least one of cost 1 and at least one Historical.
  void validate(const CostTable& costs) const;
};

bool verify_selection(Task task, Source source, const UsefulnessMap& map);

enum class Method { NoImprovement, MemoryOnly, Proposed };

struct Config {
  int trials = 150;
  double scope_fraction = 0.3;
  double epsilon0 = 0.3;
  double epsilon_decay = 0.97;
  double epsilon_floor = 0.01;
  double prior = 0.5;
  double feedback_flip = 0.0;
  CostTable costs = default_costs();
  UsefulnessMap map = UsefulnessMap::shipped();
};

Config config_from_json(const nlohmann::json& params);

/// Phi for this scenario: per-(task, source) estimate and count, the
/// exploration rate, verified-useless pairs, and the last failed source per task.
struct SelectionStrategy {
  std::map<std::pair<Task, Source>, double> estimate;
  std::map<std::pair<Task, Source>, int> count;
  std::set<std::pair<Task, Source>> useless;
  std::map<Task, Source> last_failed;
  double epsilon = 0.3;

  bool tried(Task t, Source s) const { return count.contains({t, s}); }
  double estimate_or(Task t, Source s, double prior) const;

  core::ThinkingStrategy to_thinking() const;
  static SelectionStrategy from_thinking(const core::ThinkingStrategy& phi);
};

/// Sources eligible on a trial: all ten, or Historical only for a scope trial.
std::vector<Source> eligible_pool(bool scope);

Source select_evidence(Method method, Task task, const SelectionStrategy& strategy, bool scope,
                       const Config& config, Rng& rng);

/// Verification feedback: incremental-mean estimate, useless marking, last
/// failure, and exploration decay.
void record_feedback(SelectionStrategy& strategy, Task task, Source source, bool useful,
                     const Config& config);

struct SelectionRecord {
  int trial = 0;
  Task task = Task::ObjectRecognition;
  Source source = Source::Color;
  bool scope = false;
  bool useful = false;
  double cost = 0.0;
  bool repeated_error = false;
};

struct RoundResult {
  double useful_rate = 0.0;
  double avg_cost = 0.0;
  double repeated_error_rate = 0.0;
  double thinking_success_rate = 0.0;
  double scope_success_rate = 0.0;
  std::array<double, 3> useful_by_window{};  // trial thirds
  std::vector<SelectionRecord> records;
};

RoundResult run_evidence_method(Method method, const Config& config, Rng& rng);

/// Expected NoImprovement useful rate and cost on regular (non-scope) trials.
double blind_useful_expectation(const UsefulnessMap& map);
double blind_cost_expectation(const CostTable& costs);

}  // namespace uptodate::evidence
