#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "uptodate/core/types.hpp"
#include "uptodate/rng.hpp"

namespace uptodate::core {

enum class LoopErrorCode { InconsistentState, OperatorFailure, MalformedDelta };

class LoopError : public std::runtime_error {
 public:
  LoopError(LoopErrorCode code, const std::string& what,
            std::optional<std::size_t> step_index = std::nullopt)
      : std::runtime_error(what), code_(code), step_index_(step_index) {}

  LoopErrorCode code() const { return code_; }
  /// Set by run_episode to the index of the step that failed.
  std::optional<std::size_t> step_index() const { return step_index_; }

 private:
  LoopErrorCode code_;
  std::optional<std::size_t> step_index_;
};

/// The world the loop runs in. Observation draws happen before any agent draw
/// within a step, so environment and agent consume one stream in fixed order.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation observe(const LoopState& state, Rng& rng) = 0;
  /// Called on the sufficient branch: the current relation/model/routine is used as-is.
  virtual void execute(const Observation& /*observation*/, const LearningObjectSet& /*objects*/) {}
  /// Called after an accepted update has been applied to the object set.
  virtual void commit(const LearningObjectSet& /*objects*/, const LearningResult& /*result*/) {}
};

/// Operator slots filled in by each scenario. All slots must be set.
struct OperatorBundle {
  std::function<SufficiencyAssessment(const Observation&, const LearningObjectSet&,
                                      const KnowledgeState&)>
      evaluate;
  std::function<LearningPlan(const SufficiencyAssessment&, const Observation&,
                             const LearningObjectSet&, const KnowledgeState&,
                             const ThinkingStrategy&)>
      think;
  std::function<EvidenceBatch(const LearningPlan&, const Observation&, const KnowledgeState&,
                              Rng&)>
      collect;
  std::function<LearningMaterials(const EvidenceBatch&, const LearningPlan&,
                                  const KnowledgeState&)>
      construct_data;
  std::function<LearningResult(const LearningMaterials&, const EvidenceBatch&,
                               const LearningObjectSet&)>
      learn;
  std::function<Verdict(const LearningResult&, const LearningMaterials&, const EvidenceBatch&,
                        const KnowledgeState&)>
      verify;
  std::function<ThinkingStrategy(const ThinkingStrategy&, const KnowledgeState&,
                                 const LearningResult&, const Verdict&)>
      improve_thinking;
};

/// Throws LoopError(InconsistentState) if any learning-object or relation
/// invariant is violated.
void check_consistency(const LoopState& state);
void check_consistency(const LearningObjectSet& objects);

/// Revision O_{t+1} = O_t (+) delta. Identity when the verdict is a rejection.
/// Throws LoopError(MalformedDelta) when the delta does not resolve against `objects`.
LearningObjectSet apply_update(const LearningObjectSet& objects, const CandidateUpdate& delta,
                               const Verdict& verdict);

/// Usefulness u_t of a learning result: 0 when rejected, 1 when accepted with a
/// positive "improvement" fit metric, otherwise the verdict score clamped to [0, 1].
double assess_usefulness(const LearningResult& result, const Verdict& verdict);

KnowledgeState update_knowledge(KnowledgeState knowledge, const LearningResult& result,
                                const Verdict& verdict, std::uint64_t time_step);

/// One pass of the loop: evaluate, then either keep the objects (sufficient) or
/// plan -> collect -> construct -> learn -> verify -> (update) -> knowledge -> strategy.
StepRecord run_step(const LoopState& state, Environment& env, const OperatorBundle& ops, Rng& rng);

/// Exactly `horizon` steps. Errors carry the failing step index.
EpisodeRecord run_episode(const LoopState& initial, Environment& env, const OperatorBundle& ops,
                          std::size_t horizon, Rng& rng);

}  // namespace uptodate::core
