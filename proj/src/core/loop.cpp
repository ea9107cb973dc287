#include "uptodate/core/loop.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace uptodate::core {

namespace {

[[noreturn]] void inconsistent(const std::string& what) {
  throw LoopError(LoopErrorCode::InconsistentState, "inconsistent state: " + what);
}

[[noreturn]] void malformed(const std::string& what) {
  throw LoopError(LoopErrorCode::MalformedDelta, "malformed delta: " + what);
}

[[noreturn]] void operator_failure(const std::string& what) {
  throw LoopError(LoopErrorCode::OperatorFailure, "operator failure: " + what);
}

template <typename Set>
bool is_subset(const Set& inner, const Set& outer) {
  return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

// Rebuilds the recognition relation so that it tracks the current model and sets.
void refresh_recognition(LearningObjectSet& objects, std::optional<std::set<FeatureId>> features) {
  if (objects.model.id.empty()) {
    objects.relations.recognition.reset();
    return;
  }
  RecognitionRelation rel;
  if (features) {
    rel.features = std::move(*features);
  } else if (objects.relations.recognition) {
    rel.features = objects.relations.recognition->features;
  } else {
    rel.features = objects.model.inputs;
  }
  rel.model_id = objects.model.id;
  rel.model_revision = objects.model.revision;
  rel.outputs = objects.model.outputs;
  objects.relations.recognition = std::move(rel);
}

void check_model_signature(const ModelHandle& model, const LearningObjectSet& objects,
                           void (*fail)(const std::string&)) {
  if (!is_subset(model.inputs, objects.features))
    fail("model input signature references unknown features");
  if (!is_subset(model.outputs, objects.outputs))
    fail("model output signature references unknown outputs");
}

}  // namespace

void check_consistency(const LearningObjectSet& objects) {
  check_model_signature(objects.model, objects, inconsistent);
  const auto& rec = objects.relations.recognition;
  if (rec) {
    if (rec->model_id != objects.model.id || rec->model_revision != objects.model.revision)
      inconsistent("recognition relation does not reference the current model");
    if (!is_subset(rec->features, objects.features))
      inconsistent("recognition relation references unknown features");
    if (!is_subset(rec->outputs, objects.outputs))
      inconsistent("recognition relation references unknown outputs");
  }
  for (const auto& act : objects.relations.action) {
    const ActionRoutine* routine = objects.routine_for(act.goal);
    if (routine == nullptr || routine->actions != act.routine)
      inconsistent("action relation references a routine that is not in the object set");
  }
  std::set<std::string> goals;
  for (const auto& r : objects.routines) {
    if (r.actions.empty()) inconsistent("empty action routine");
    if (!goals.insert(r.goal).second) inconsistent("two routines share goal '" + r.goal + "'");
  }
}

void check_consistency(const LoopState& state) {
  check_consistency(state.objects);
  for (std::size_t i = 1; i < state.knowledge.entries().size(); ++i) {
    if (state.knowledge.entries()[i].time_step < state.knowledge.entries()[i - 1].time_step)
      inconsistent("knowledge entries out of time order");
  }
}

LearningObjectSet apply_update(const LearningObjectSet& objects, const CandidateUpdate& delta,
                               const Verdict& verdict) {
  LearningObjectSet next = objects;
  switch (delta.kind) {
    case UpdateKind::AddFeature: {
      if (delta.name.empty()) malformed("AddFeature without a feature id");
      if (objects.features.contains(delta.name))
        malformed("feature '" + delta.name + "' already present");
      if (!verdict.accepted) return objects;
      next.features.insert(delta.name);
      if (delta.model) {
        next.model = *delta.model;
      } else {
        next.model.inputs = next.features;
        ++next.model.revision;
      }
      check_model_signature(next.model, next, malformed);
      refresh_recognition(next, next.model.inputs);
      break;
    }
    case UpdateKind::AddCategory: {
      if (delta.name.empty()) malformed("AddCategory without a category id");
      if (objects.outputs.contains(delta.name))
        malformed("category '" + delta.name + "' already present");
      if (!verdict.accepted) return objects;
      next.outputs.insert(delta.name);
      if (delta.model) {
        next.model = *delta.model;
      } else {
        next.model.outputs.insert(delta.name);
        ++next.model.revision;
      }
      check_model_signature(next.model, next, malformed);
      refresh_recognition(next, std::nullopt);
      break;
    }
    case UpdateKind::ReplaceModel: {
      if (!delta.model) malformed("ReplaceModel without a model");
      check_model_signature(*delta.model, objects, malformed);
      if (!verdict.accepted) return objects;
      next.model = *delta.model;
      refresh_recognition(next, std::nullopt);
      if (next.relations.recognition &&
          !is_subset(next.relations.recognition->features, next.features))
        malformed("relation features outside the feature set");
      break;
    }
    case UpdateKind::ReplaceRoutine: {
      if (delta.name.empty()) malformed("ReplaceRoutine without a goal");
      if (delta.actions.empty()) malformed("ReplaceRoutine with an empty routine");
      if (!verdict.accepted) return objects;
      auto it = std::find_if(next.routines.begin(), next.routines.end(),
                             [&](const ActionRoutine& r) { return r.goal == delta.name; });
      if (it == next.routines.end()) {
        next.routines.push_back({delta.name, delta.actions});
      } else {
        it->actions = delta.actions;
      }
      auto& acts = next.relations.action;
      std::erase_if(acts, [&](const ActionRelation& a) { return a.goal == delta.name; });
      acts.push_back({delta.actions, delta.name});
      break;
    }
    case UpdateKind::ReviseRelation: {
      if (objects.model.id.empty()) malformed("ReviseRelation without a recognition model");
      if (!is_subset(delta.relation_features, objects.features))
        malformed("relation references unknown features");
      if (!verdict.accepted) return objects;
      refresh_recognition(next, delta.relation_features);
      break;
    }
  }
  next.version = objects.version;
  if (next == objects) return objects;
  next.version = objects.version + 1;
  return next;
}

double assess_usefulness(const LearningResult& result, const Verdict& verdict) {
  if (!verdict.accepted) return 0.0;
  auto it = result.fit_metrics.find("improvement");
  if (it == result.fit_metrics.end() || it->second > 0.0) return 1.0;
  return std::clamp(verdict.score, 0.0, 1.0);
}

KnowledgeState update_knowledge(KnowledgeState knowledge, const LearningResult& result,
                                const Verdict& verdict, std::uint64_t time_step) {
  KnowledgeEntry entry;
  entry.time_step = time_step;
  entry.kind = EntryKind::LearningOutcome;
  entry.result = result;
  entry.verdict = verdict;
  entry.usefulness = assess_usefulness(result, verdict);
  knowledge.append(std::move(entry));
  return knowledge;
}

StepRecord run_step(const LoopState& state, Environment& env, const OperatorBundle& ops, Rng& rng) {
  check_consistency(state);

  StepRecord record;
  StepTrace& trace = record.trace;
  LoopState next = state;
  next.time_step = state.time_step + 1;

  trace.observation = env.observe(state, rng);
  trace.assessment = ops.evaluate(trace.observation, state.objects, state.knowledge);
  if (trace.assessment.sufficient && trace.assessment.deficit)
    operator_failure("sufficient assessment carries a deficit");
  if (!trace.assessment.sufficient && !trace.assessment.deficit)
    operator_failure("insufficient assessment without a deficit");

  if (trace.assessment.sufficient) {
    env.execute(trace.observation, state.objects);
    KnowledgeEntry entry;
    entry.time_step = state.time_step;
    entry.kind = EntryKind::Observation;
    entry.observation = trace.observation;
    next.knowledge.append(std::move(entry));
    record.state = std::move(next);
    record.applied = false;
    return record;
  }

  trace.plan = ops.think(trace.assessment, trace.observation, state.objects, state.knowledge,
                         state.strategy);
  if (trace.plan->evidence_requests.empty()) operator_failure("learning plan requests no evidence");

  trace.evidence = ops.collect(*trace.plan, trace.observation, state.knowledge, rng);
  if (trace.evidence->empty()) operator_failure("evidence collection returned nothing");

  trace.materials = ops.construct_data(*trace.evidence, *trace.plan, state.knowledge);
  for (std::size_t idx : trace.materials->training)
    if (idx >= trace.evidence->size()) operator_failure("training item outside the evidence batch");
  for (std::size_t idx : trace.materials->validation)
    if (idx >= trace.evidence->size())
      operator_failure("validation item outside the evidence batch");

  trace.result = ops.learn(*trace.materials, *trace.evidence, state.objects);
  trace.verdict = ops.verify(*trace.result, *trace.materials, *trace.evidence, state.knowledge);
  if (trace.verdict->accepted && trace.verdict->reason != VerdictReason::PassedThreshold)
    operator_failure("accepted verdict without a passed threshold");

  next.objects = apply_update(state.objects, trace.result->candidate, *trace.verdict);
  record.applied = trace.verdict->accepted && next.objects != state.objects;
  if (record.applied) env.commit(next.objects, *trace.result);

  next.knowledge =
      update_knowledge(std::move(next.knowledge), *trace.result, *trace.verdict, state.time_step);

  ThinkingStrategy improved =
      ops.improve_thinking(state.strategy, next.knowledge, *trace.result, *trace.verdict);
  improved.version = state.strategy.version;
  if (improved.parameters != state.strategy.parameters) improved.version += 1;
  next.strategy = std::move(improved);

  record.state = std::move(next);
  return record;
}

EpisodeRecord run_episode(const LoopState& initial, Environment& env, const OperatorBundle& ops,
                          std::size_t horizon, Rng& rng) {
  if (horizon == 0) throw std::invalid_argument("run_episode: horizon must be at least 1");
  EpisodeRecord episode;
  episode.steps.reserve(horizon);
  const LoopState* current = &initial;
  for (std::size_t i = 0; i < horizon; ++i) {
    try {
      episode.steps.push_back(run_step(*current, env, ops, rng));
    } catch (const LoopError& e) {
      throw LoopError(e.code(), "step " + std::to_string(i) + ": " + e.what(), i);
    }
    current = &episode.steps.back().state;
  }
  episode.final_state = episode.steps.back().state;
  return episode;
}

}  // namespace uptodate::core
