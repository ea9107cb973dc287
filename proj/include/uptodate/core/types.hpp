#pragma once

// Data model of the closed thinking-learning loop: the learning-object set
// (features, outputs, model, routines, relations), the knowledge state, the
// thinking strategy, and the per-step pipeline artifacts.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uptodate/core/json_support.hpp"

namespace uptodate::core {

using FeatureId = std::string;
using CategoryId = std::string;
using MetricMap = std::map<std::string, double>;

/// Opaque per-scenario model, described by its signature and a parameter summary.
struct ModelHandle {
  std::string id;
  std::uint64_t revision = 0;
  std::set<FeatureId> inputs;
  std::set<CategoryId> outputs;
  MetricMap parameters;

  bool operator==(const ModelHandle&) const = default;
};

struct ActionRoutine {
  std::string goal;
  std::vector<std::string> actions;

  bool operator==(const ActionRoutine&) const = default;
};

/// (feature subset, model) -> output set.
struct RecognitionRelation {
  std::set<FeatureId> features;
  std::string model_id;
  std::uint64_t model_revision = 0;
  std::set<CategoryId> outputs;

  bool operator==(const RecognitionRelation&) const = default;
};

/// routine -> goal.
struct ActionRelation {
  std::vector<std::string> routine;
  std::string goal;

  bool operator==(const ActionRelation&) const = default;
};

struct RelationSet {
  std::optional<RecognitionRelation> recognition;
  std::vector<ActionRelation> action;

  bool operator==(const RelationSet&) const = default;
};

struct LearningObjectSet {
  std::set<FeatureId> features;
  std::set<CategoryId> outputs;
  ModelHandle model;
  std::vector<ActionRoutine> routines;
  RelationSet relations;
  std::uint64_t version = 0;

  bool operator==(const LearningObjectSet&) const = default;

  const ActionRoutine* routine_for(const std::string& goal) const {
    for (const auto& r : routines)
      if (r.goal == goal) return &r;
    return nullptr;
  }
};

/// Environment observation s_t. `values` carries the scenario payload.
struct Observation {
  std::string kind;
  std::string label;
  std::vector<double> values;

  bool operator==(const Observation&) const = default;
};

enum class UpdateComponent { InputFeatures, OutputSet, Model, Routine, Relation };

struct UpdateTarget {
  UpdateComponent component = UpdateComponent::Model;
  std::string detail;

  bool operator==(const UpdateTarget&) const = default;
};

struct SufficiencyAssessment {
  bool sufficient = true;
  std::optional<UpdateTarget> deficit;
  MetricMap diagnostics;

  bool operator==(const SufficiencyAssessment&) const = default;
};

struct EvidenceRequest {
  std::string source;
  std::size_t quantity = 0;
  double cost_estimate = 0.0;

  bool operator==(const EvidenceRequest&) const = default;
};

struct LearningPlan {
  UpdateTarget target;
  std::vector<EvidenceRequest> evidence_requests;
  MetricMap verification_protocol;

  bool operator==(const LearningPlan&) const = default;
};

enum class EvidenceOrigin { CurrentObservation, HistoricalMemory, ActiveInteraction };

struct EvidenceItem {
  Observation payload;
  std::string source;
  EvidenceOrigin origin = EvidenceOrigin::CurrentObservation;
  double cost = 0.0;

  bool operator==(const EvidenceItem&) const = default;
};

/// Evidence E_t. `total_cost` is maintained by add() and always equals the item sum.
class EvidenceBatch {
 public:
  void add(EvidenceItem item) {
    total_cost_ += item.cost;
    items_.push_back(std::move(item));
  }
  const std::vector<EvidenceItem>& items() const { return items_; }
  double total_cost() const { return total_cost_; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }

  bool operator==(const EvidenceBatch&) const = default;

 private:
  std::vector<EvidenceItem> items_;
  double total_cost_ = 0.0;
};

/// Learning materials D_t: a training/validation split expressed as indices
/// into the evidence batch, so every item traces back to its source.
struct LearningMaterials {
  std::vector<std::size_t> training;
  std::vector<std::size_t> validation;
  UpdateTarget target;

  bool operator==(const LearningMaterials&) const = default;
};

enum class UpdateKind { AddFeature, AddCategory, ReplaceModel, ReplaceRoutine, ReviseRelation };

/// Candidate update to the learning-object set. Which payload fields are read
/// depends on `kind`:
///   AddFeature / AddCategory: `name` (optionally `model` for the retrained model)
///   ReplaceModel:             `model`
///   ReplaceRoutine:           `name` is the goal, `actions` the routine
///   ReviseRelation:           `relation_features`
struct CandidateUpdate {
  UpdateKind kind = UpdateKind::ReviseRelation;
  std::string name;
  std::vector<std::string> actions;
  std::optional<ModelHandle> model;
  std::set<FeatureId> relation_features;

  bool operator==(const CandidateUpdate&) const = default;
};

struct LearningResult {
  CandidateUpdate candidate;
  MetricMap fit_metrics;

  bool operator==(const LearningResult&) const = default;
};

enum class VerdictReason { PassedThreshold, FailedThreshold, InsufficientEvidence };

struct Verdict {
  bool accepted = false;
  double score = 0.0;
  VerdictReason reason = VerdictReason::FailedThreshold;

  bool operator==(const Verdict&) const = default;

  static Verdict pass(double score) { return {true, score, VerdictReason::PassedThreshold}; }
  static Verdict fail(double score) { return {false, score, VerdictReason::FailedThreshold}; }
  static Verdict insufficient(double score = 0.0) {
    return {false, score, VerdictReason::InsufficientEvidence};
  }
};

enum class EntryKind { Observation, LearningOutcome };

struct KnowledgeEntry {
  std::uint64_t time_step = 0;
  EntryKind kind = EntryKind::Observation;
  Observation observation;
  std::optional<LearningResult> result;
  std::optional<Verdict> verdict;
  double usefulness = 0.0;

  bool operator==(const KnowledgeEntry&) const = default;
};

/// Append-only knowledge K_t.
class KnowledgeState {
 public:
  void append(KnowledgeEntry entry) { entries_.push_back(std::move(entry)); }
  const std::vector<KnowledgeEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const KnowledgeState&) const = default;

 private:
  std::vector<KnowledgeEntry> entries_;
};

/// Thinking strategy Phi_t: named scenario parameters plus a version that only
/// improve_thinking advances.
struct ThinkingStrategy {
  MetricMap parameters;
  std::uint64_t version = 0;

  bool operator==(const ThinkingStrategy&) const = default;

  double get(const std::string& key, double fallback = 0.0) const {
    auto it = parameters.find(key);
    return it == parameters.end() ? fallback : it->second;
  }
};

struct LoopState {
  std::uint64_t time_step = 0;
  LearningObjectSet objects;
  KnowledgeState knowledge;
  ThinkingStrategy strategy;

  bool operator==(const LoopState&) const = default;
};

/// Artifacts q_t, P_t, E_t, D_t, L_t, v_t of one step. Only the assessment is
/// present when the objects were judged sufficient.
struct StepTrace {
  Observation observation;
  SufficiencyAssessment assessment;
  std::optional<LearningPlan> plan;
  std::optional<EvidenceBatch> evidence;
  std::optional<LearningMaterials> materials;
  std::optional<LearningResult> result;
  std::optional<Verdict> verdict;

  bool operator==(const StepTrace&) const = default;
};

struct StepRecord {
  LoopState state;
  bool applied = false;
  StepTrace trace;

  bool operator==(const StepRecord&) const = default;
};

struct EpisodeRecord {
  LoopState final_state;
  std::vector<StepRecord> steps;

  bool operator==(const EpisodeRecord&) const = default;
};

// JSON mappings, used for deterministic replay comparisons and debugging dumps.

NLOHMANN_JSON_SERIALIZE_ENUM(UpdateComponent, {{UpdateComponent::InputFeatures, "input_features"},
                                               {UpdateComponent::OutputSet, "output_set"},
                                               {UpdateComponent::Model, "model"},
                                               {UpdateComponent::Routine, "routine"},
                                               {UpdateComponent::Relation, "relation"}})
NLOHMANN_JSON_SERIALIZE_ENUM(EvidenceOrigin,
                             {{EvidenceOrigin::CurrentObservation, "current_observation"},
                              {EvidenceOrigin::HistoricalMemory, "historical_memory"},
                              {EvidenceOrigin::ActiveInteraction, "active_interaction"}})
NLOHMANN_JSON_SERIALIZE_ENUM(UpdateKind, {{UpdateKind::AddFeature, "add_feature"},
                                          {UpdateKind::AddCategory, "add_category"},
                                          {UpdateKind::ReplaceModel, "replace_model"},
                                          {UpdateKind::ReplaceRoutine, "replace_routine"},
                                          {UpdateKind::ReviseRelation, "revise_relation"}})
NLOHMANN_JSON_SERIALIZE_ENUM(VerdictReason,
                             {{VerdictReason::PassedThreshold, "passed_threshold"},
                              {VerdictReason::FailedThreshold, "failed_threshold"},
                              {VerdictReason::InsufficientEvidence, "insufficient_evidence"}})
NLOHMANN_JSON_SERIALIZE_ENUM(EntryKind, {{EntryKind::Observation, "observation"},
                                         {EntryKind::LearningOutcome, "learning_outcome"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelHandle, id, revision, inputs, outputs, parameters)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ActionRoutine, goal, actions)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RecognitionRelation, features, model_id, model_revision, outputs)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ActionRelation, routine, goal)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RelationSet, recognition, action)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LearningObjectSet, features, outputs, model, routines, relations,
                                   version)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Observation, kind, label, values)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(UpdateTarget, component, detail)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SufficiencyAssessment, sufficient, deficit, diagnostics)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvidenceRequest, source, quantity, cost_estimate)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LearningPlan, target, evidence_requests, verification_protocol)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvidenceItem, payload, source, origin, cost)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LearningMaterials, training, validation, target)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CandidateUpdate, kind, name, actions, model, relation_features)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LearningResult, candidate, fit_metrics)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Verdict, accepted, score, reason)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(KnowledgeEntry, time_step, kind, observation, result, verdict,
                                   usefulness)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ThinkingStrategy, parameters, version)

void to_json(nlohmann::json& j, const EvidenceBatch& batch);
void from_json(const nlohmann::json& j, EvidenceBatch& batch);
void to_json(nlohmann::json& j, const KnowledgeState& knowledge);
void from_json(const nlohmann::json& j, KnowledgeState& knowledge);

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LoopState, time_step, objects, knowledge, strategy)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(StepTrace, observation, assessment, plan, evidence, materials,
                                   result, verdict)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(StepRecord, state, applied, trace)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EpisodeRecord, final_state, steps)

}  // namespace uptodate::core
