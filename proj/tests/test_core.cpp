#include <doctest.h>

#include "toy_loop.hpp"
#include "uptodate/core/loop.hpp"
#include "uptodate/feature/feature.hpp"
#include "uptodate/routine/routine.hpp"

using namespace uptodate;
using namespace uptodate::core;

namespace {

LearningObjectSet feature_objects() {
  LearningObjectSet o;
  o.features = {"shape", "size"};
  o.outputs = {"banana", "apple", "cup", "bottle"};
  o.model = {"nb", 3, {"shape", "size"}, o.outputs, {}};
  o.relations.recognition = RecognitionRelation{{"shape", "size"}, "nb", 3, o.outputs};
  return o;
}

CandidateUpdate add_feature(const std::string& name) {
  CandidateUpdate c;
  c.kind = UpdateKind::AddFeature;
  c.name = name;
  return c;
}

LoopErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const LoopError& e) {
    return e.code();
  }
  FAIL("expected a LoopError");
  return LoopErrorCode::OperatorFailure;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("accepted AddFeature grows X and rebuilds the recognition relation") {
    const LearningObjectSet o = feature_objects();
    const LearningObjectSet n = apply_update(o, add_feature("color"), Verdict::pass(1));
    CHECK(n.features == std::set<FeatureId>{"shape", "size", "color"});
    CHECK(n.model.revision == 4);
    CHECK(n.relations.recognition->features == n.features);
    CHECK(n.relations.recognition->model_revision == 4);
    CHECK(n.version == o.version + 1);
    CHECK_NOTHROW(check_consistency(n));
  }

  TEST_CASE("AddFeature with an explicit retrained model uses it") {
    CandidateUpdate c = add_feature("color");
    c.model = ModelHandle{"nb", 9, {"shape", "color"}, feature_objects().outputs, {{"acc", 0.8}}};
    const LearningObjectSet n = apply_update(feature_objects(), c, Verdict::pass(1));
    CHECK(n.model.revision == 9);
    CHECK(n.relations.recognition->features == std::set<FeatureId>{"shape", "color"});
  }

  TEST_CASE("rejection is the identity, including the version") {
    const LearningObjectSet o = feature_objects();
    for (auto kind : {UpdateKind::AddFeature, UpdateKind::AddCategory, UpdateKind::ReviseRelation}) {
      CandidateUpdate c;
      c.kind = kind;
      c.name = "new_thing";
      c.relation_features = {"shape"};
      CHECK(apply_update(o, c, Verdict::fail(0)) == o);
      CHECK(apply_update(o, c, Verdict::insufficient()) == o);
    }
  }

  TEST_CASE("ReplaceRoutine installs the routine and its action relation") {
    LearningObjectSet o;
    o.routines = {{"quick_wash", std::vector<std::string>(13, "press_program")}};
    o.relations.action = {{o.routines[0].actions, "quick_wash"}};
    CandidateUpdate c;
    c.kind = UpdateKind::ReplaceRoutine;
    c.name = "quick_wash";
    c.actions = {"power_on", "press_program", "press_program", "confirm"};
    const LearningObjectSet n = apply_update(o, c, Verdict::pass(1));
    REQUIRE(n.routine_for("quick_wash") != nullptr);
    CHECK(n.routine_for("quick_wash")->actions == c.actions);
    REQUIRE(n.relations.action.size() == 1);
    CHECK(n.relations.action[0].routine == c.actions);
    CHECK(n.relations.action[0].goal == "quick_wash");
    CHECK_NOTHROW(check_consistency(n));
  }

  TEST_CASE("AddCategory extends Y and the model output signature") {
    CandidateUpdate c;
    c.kind = UpdateKind::AddCategory;
    c.name = "orange";
    const LearningObjectSet n = apply_update(feature_objects(), c, Verdict::pass(1));
    CHECK(n.outputs.contains("orange"));
    CHECK(n.model.outputs.contains("orange"));
    CHECK(n.relations.recognition->outputs.contains("orange"));
  }

  TEST_CASE("an accepted no-op does not bump the version") {
    const LearningObjectSet o = feature_objects();
    CandidateUpdate c;
    c.kind = UpdateKind::ReviseRelation;
    c.relation_features = {"shape", "size"};
    CHECK(apply_update(o, c, Verdict::pass(1)).version == o.version);
  }

  TEST_CASE("malformed deltas are rejected even when the verdict is a rejection") {
    const LearningObjectSet o = feature_objects();
    CHECK(code_of([&] { apply_update(o, add_feature("shape"), Verdict::fail(0)); }) ==
          LoopErrorCode::MalformedDelta);
    CHECK(code_of([&] { apply_update(o, add_feature(""), Verdict::pass(1)); }) ==
          LoopErrorCode::MalformedDelta);
    CandidateUpdate rel;
    rel.kind = UpdateKind::ReviseRelation;
    rel.relation_features = {"weight"};
    CHECK(code_of([&] { apply_update(o, rel, Verdict::fail(0)); }) == LoopErrorCode::MalformedDelta);
    CandidateUpdate model;
    model.kind = UpdateKind::ReplaceModel;
    model.model = ModelHandle{"nb", 5, {"texture"}, {}, {}};
    CHECK(code_of([&] { apply_update(o, model, Verdict::pass(1)); }) == LoopErrorCode::MalformedDelta);
    CandidateUpdate routine;
    routine.kind = UpdateKind::ReplaceRoutine;
    routine.name = "goal";
    CHECK(code_of([&] { apply_update(o, routine, Verdict::pass(1)); }) == LoopErrorCode::MalformedDelta);
  }

  TEST_CASE("check_consistency catches broken references") {
    LearningObjectSet o = feature_objects();
    o.model.inputs.insert("weight");
    CHECK(code_of([&] { check_consistency(o); }) == LoopErrorCode::InconsistentState);

    o = feature_objects();
    o.relations.recognition->model_revision = 2;
    CHECK(code_of([&] { check_consistency(o); }) == LoopErrorCode::InconsistentState);

    o = feature_objects();
    o.relations.action = {{{"confirm"}, "missing_goal"}};
    CHECK(code_of([&] { check_consistency(o); }) == LoopErrorCode::InconsistentState);

    o = feature_objects();
    o.routines = {{"g", {"a"}}, {"g", {"b"}}};
    CHECK(code_of([&] { check_consistency(o); }) == LoopErrorCode::InconsistentState);

    LoopState s;
    s.knowledge.append({5, EntryKind::Observation, {}, {}, {}, 0});
    s.knowledge.append({4, EntryKind::Observation, {}, {}, {}, 0});
    CHECK(code_of([&] { check_consistency(s); }) == LoopErrorCode::InconsistentState);
  }

  TEST_CASE("usefulness") {
    LearningResult L;
    CHECK(assess_usefulness(L, Verdict::fail(0.9)) == 0.0);
    CHECK(assess_usefulness(L, Verdict::pass(0.2)) == 1.0);
    L.fit_metrics["improvement"] = 0.1;
    CHECK(assess_usefulness(L, Verdict::pass(0.2)) == 1.0);
    L.fit_metrics["improvement"] = 0.0;
    CHECK(assess_usefulness(L, Verdict::pass(0.2)) == 0.2);
    CHECK(assess_usefulness(L, Verdict::pass(7.0)) == 1.0);
  }

  TEST_CASE("evidence batch total cost tracks its items") {
    EvidenceBatch b;
    b.add({{}, "s", EvidenceOrigin::CurrentObservation, 0.1});
    b.add({{}, "s", EvidenceOrigin::HistoricalMemory, 0.2});
    CHECK(b.total_cost() == doctest::Approx(0.3).epsilon(1e-15));
    const EvidenceBatch back = nlohmann::json(b).get<EvidenceBatch>();
    CHECK(back == b);
  }

  TEST_CASE("sufficient branch keeps objects and strategy and logs an observation") {
    toy::Env env;
    env.p_sufficient = 1.0;
    const OperatorBundle ops = toy::operators();
    LoopState s = toy::initial_state();
    s.strategy.parameters["seen"] = 3;
    Rng rng(1);
    const StepRecord r = run_step(s, env, ops, rng);
    CHECK_FALSE(r.applied);
    CHECK(r.state.objects == s.objects);
    CHECK(r.state.strategy == s.strategy);
    CHECK(r.state.time_step == 1);
    REQUIRE(r.state.knowledge.size() == 1);
    CHECK(r.state.knowledge.entries()[0].kind == EntryKind::Observation);
    CHECK(env.executed == 1);
    CHECK_FALSE(r.trace.plan.has_value());
  }

  TEST_CASE("rejected candidate leaves objects unchanged and is stored") {
    toy::Env env;
    env.p_sufficient = 0.0;
    env.p_accept = 0.0;
    const OperatorBundle ops = toy::operators();
    const LoopState s = toy::initial_state();
    Rng rng(2);
    const StepRecord r = run_step(s, env, ops, rng);
    CHECK_FALSE(r.applied);
    CHECK(r.state.objects == s.objects);
    REQUIRE(r.state.knowledge.size() == 1);
    const KnowledgeEntry& e = r.state.knowledge.entries()[0];
    CHECK(e.kind == EntryKind::LearningOutcome);
    CHECK_FALSE(e.verdict->accepted);
    CHECK(e.usefulness == 0.0);
    CHECK(r.state.strategy.version == 1);
    CHECK(env.committed == 0);
  }

  TEST_CASE("operator contract violations raise OperatorFailure") {
    toy::Env env;
    env.p_sufficient = 0.0;
    const LoopState s = toy::initial_state();
    auto failing = [&](auto mutate) {
      OperatorBundle ops = toy::operators();
      mutate(ops);
      Rng rng(3);
      return code_of([&] { run_step(s, env, ops, rng); });
    };
    CHECK(failing([](OperatorBundle& o) {
            o.evaluate = [](auto&, auto&, auto&) { return SufficiencyAssessment{false, std::nullopt, {}}; };
          }) == LoopErrorCode::OperatorFailure);
    CHECK(failing([](OperatorBundle& o) {
            o.evaluate = [](auto&, auto&, auto&) {
              return SufficiencyAssessment{true, UpdateTarget{}, {}};
            };
          }) == LoopErrorCode::OperatorFailure);
    CHECK(failing([](OperatorBundle& o) {
            o.think = [](auto& q, auto&, auto&, auto&, auto&) { return LearningPlan{*q.deficit, {}, {}}; };
          }) == LoopErrorCode::OperatorFailure);
    CHECK(failing([](OperatorBundle& o) {
            o.collect = [](auto&, auto&, auto&, Rng&) { return EvidenceBatch{}; };
          }) == LoopErrorCode::OperatorFailure);
    CHECK(failing([](OperatorBundle& o) {
            o.construct_data = [](auto&, auto& p, auto&) { return LearningMaterials{{99}, {}, p.target}; };
          }) == LoopErrorCode::OperatorFailure);
    CHECK(failing([](OperatorBundle& o) {
            o.verify = [](auto&, auto&, auto&, auto&) {
              return Verdict{true, 1.0, VerdictReason::InsufficientEvidence};
            };
          }) == LoopErrorCode::OperatorFailure);
  }

  TEST_CASE("inconsistent entry state is refused before any operator runs") {
    toy::Env env;
    LoopState s = toy::initial_state();
    s.objects.model.inputs.insert("zzz");
    Rng rng(4);
    CHECK(code_of([&] { run_step(s, env, toy::operators(), rng); }) == LoopErrorCode::InconsistentState);
  }

  TEST_CASE("run_episode reports the failing step") {
    toy::Env env;
    env.p_sufficient = 0.0;
    OperatorBundle ops = toy::operators();
    ops.collect = [](const LearningPlan&, const Observation& obs, const KnowledgeState&, Rng&) {
      EvidenceBatch b;
      if (obs.label != "3") b.add({obs, "current", EvidenceOrigin::CurrentObservation, 1});
      return b;
    };
    Rng rng(5);
    try {
      run_episode(toy::initial_state(), env, ops, 10, rng);
      FAIL("expected failure");
    } catch (const LoopError& e) {
      CHECK(e.code() == LoopErrorCode::OperatorFailure);
      REQUIRE(e.step_index().has_value());
      CHECK(*e.step_index() == 3);
    }
    CHECK_THROWS_AS(run_episode(toy::initial_state(), env, ops, 0, rng), std::invalid_argument);
  }

  TEST_CASE("T=1 over a sufficient-only environment keeps the initial objects") {
    toy::Env env;
    env.p_sufficient = 1.0;
    Rng rng(6);
    const EpisodeRecord ep = run_episode(toy::initial_state(), env, toy::operators(), 1, rng);
    CHECK(ep.final_state.objects == toy::initial_state().objects);
  }

  TEST_CASE("feature agent: one step from {shape, size} adds color") {
    const feature::Config cfg;
    Rng rng(7);
    const StepRecord r = feature::run_proposed_first_step(cfg, rng);
    CHECK(r.applied);
    CHECK(r.state.objects.features == std::set<FeatureId>{"shape", "size", "color"});
    // The Bayes-optimal accuracy confirms the gain is real, not an artefact of the sample.
    const auto spec = feature::GenerativeSpec::calibrated();
    CHECK(feature::bayes_oracle(spec, feature::parse_feature_list("shape,size,color")) >
          feature::bayes_oracle(spec, feature::parse_feature_list("shape,size")) + 0.1);
  }

  TEST_CASE("routine agent: T=10 ends with a 4-action routine") {
    routine::Config cfg;
    Rng rng(7);
    const EpisodeRecord ep = routine::run_proposed_episode(cfg, rng);
    const ActionRoutine* r = ep.final_state.objects.routine_for("quick_wash");
    REQUIRE(r != nullptr);
    CHECK(r->actions.size() == 4);
    CHECK(ep.steps.size() == 10);
  }

  TEST_CASE("episode JSON round-trips") {
    toy::Env env;
    Rng rng(8);
    const EpisodeRecord ep = run_episode(toy::initial_state(), env, toy::operators(), 25, rng);
    const nlohmann::json j = ep;
    CHECK(j.get<EpisodeRecord>() == ep);
  }
}
