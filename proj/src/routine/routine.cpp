#include "uptodate/routine/routine.hpp"

#include <algorithm>

#include "uptodate/core/loop.hpp"
#include "uptodate/core/params.hpp"

namespace uptodate::routine {

namespace {

constexpr const char* kGoal = "quick_wash";
constexpr const char* kExploreSource = "reactive_exploration";
constexpr double kLegacyLength = 13.0;

bool is_passive(Action a) { return a == Action::ObserveMode || a == Action::Judge; }

core::Observation encode(const ExecutionTrace& trace, const std::string& kind) {
  core::Observation obs;
  obs.kind = kind;
  obs.label = trace.success ? "success" : "failure";
  for (const auto& [action, _] : trace.steps) obs.values.push_back(static_cast<double>(action));
  return obs;
}

Routine decode(const core::Observation& obs) {
  Routine r;
  for (double v : obs.values) r.push_back(static_cast<Action>(static_cast<int>(v)));
  return r;
}

std::vector<std::string> names_of(const Routine& routine) {
  std::vector<std::string> out;
  for (Action a : routine) out.emplace_back(action_name(a));
  return out;
}

Routine from_names(const std::vector<std::string>& names) {
  Routine out;
  for (const auto& n : names) out.push_back(parse_action(n));
  return out;
}

double compression(double length) { return 1.0 - length / kLegacyLength; }

Routine greedy_compress(const ExecutionTrace& source) {
  Routine candidate = source.actions();
  std::size_t i = 0;
  while (i < candidate.size()) {
    if (!is_passive(candidate[i])) {
      ++i;
      continue;
    }
    Routine shorter = candidate;
    shorter.erase(shorter.begin() + static_cast<std::ptrdiff_t>(i));
    if (execute_routine(shorter).success) {
      candidate = std::move(shorter);
    } else {
      ++i;
    }
  }
  return candidate;
}

const ExecutionTrace& shortest_success(const std::vector<ExecutionTrace>& traces) {
  const ExecutionTrace* best = nullptr;
  for (const auto& t : traces) {
    if (t.success && (best == nullptr || t.length() < best->length())) best = &t;
  }
  if (best == nullptr) throw NoSuccessfulTrace("compress_routine: no successful trace");
  return *best;
}

}  // namespace

std::string_view action_name(Action a) {
  switch (a) {
    case Action::PowerOn: return "power_on";
    case Action::PressProgram: return "press_program";
    case Action::ObserveMode: return "observe_mode";
    case Action::Judge: return "judge";
    case Action::Confirm: return "confirm";
  }
  return "?";
}

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::Standard: return "standard";
    case Mode::Heavy: return "heavy";
    case Mode::Quick: return "quick";
    case Mode::Rinse: return "rinse";
    case Mode::Spin: return "spin";
  }
  return "?";
}

Action parse_action(std::string_view name) {
  for (Action a : kAllActions)
    if (action_name(a) == name) return a;
  throw std::invalid_argument("unknown action '" + std::string(name) + "'");
}

std::pair<MachineState, MachineObservation> step_machine(const MachineState& state, Action action) {
  MachineState next = state;
  MachineObservation obs;
  if (state.confirmed) return {next, obs};
  if (action == Action::PowerOn) {
    next.power = true;
    next.mode_index = 0;
    return {next, obs};
  }
  if (!state.power) {
    obs.kind = MachineObservation::Kind::Unpowered;
    return {next, obs};
  }
  switch (action) {
    case Action::PressProgram:
      next.mode_index = (state.mode_index + 1) % kModeCount;
      break;
    case Action::ObserveMode:
      obs.kind = MachineObservation::Kind::Mode;
      obs.mode_index = state.mode_index;
      break;
    case Action::Judge:
      obs.kind = MachineObservation::Kind::Judgement;
      obs.at_target = state.mode_index == static_cast<int>(kTargetMode);
      break;
    case Action::Confirm:
      next.confirmed = state.mode_index;
      obs.kind = MachineObservation::Kind::Confirmed;
      obs.mode_index = state.mode_index;
      break;
    case Action::PowerOn:
      break;
  }
  return {next, obs};
}

Routine ExecutionTrace::actions() const {
  Routine out;
  for (const auto& [a, _] : steps) out.push_back(a);
  return out;
}

ExecutionTrace execute_routine(const Routine& routine) {
  if (routine.size() > kRoutineCap)
    throw std::invalid_argument("execute_routine: routine longer than the simulator cap");
  ExecutionTrace trace;
  MachineState state;
  for (Action a : routine) {
    auto [next, obs] = step_machine(state, a);
    trace.steps.emplace_back(a, obs);
    state = next;
    if (state.confirmed) break;
  }
  trace.success = state.confirmed && *state.confirmed == static_cast<int>(kTargetMode);
  return trace;
}

Routine legacy_routine() {
  Routine r{Action::PowerOn};
  for (int i = 0; i < 4; ++i) {
    r.push_back(Action::PressProgram);
    r.push_back(Action::ObserveMode);
    r.push_back(Action::Judge);
  }
  return r;
}

Routine reactive_exploration(int max_presses) {
  Routine r{Action::PowerOn};
  MachineState state = step_machine({}, Action::PowerOn).first;
  for (int presses = 0;; ++presses) {
    r.push_back(Action::ObserveMode);
    r.push_back(Action::Judge);
    if (step_machine(state, Action::Judge).second.at_target || presses >= max_presses) break;
    r.push_back(Action::PressProgram);
    state = step_machine(state, Action::PressProgram).first;
  }
  r.push_back(Action::Confirm);
  return r;
}

Routine minimal_routine_oracle(int max_len) {
  if (max_len > 8) throw std::invalid_argument("minimal_routine_oracle: max_len must be <= 8");
  for (int len = 1; len <= max_len; ++len) {
    std::vector<int> digits(static_cast<std::size_t>(len), 0);
    while (true) {
      Routine r;
      for (int d : digits) r.push_back(kAllActions[static_cast<std::size_t>(d)]);
      if (execute_routine(r).success) return r;
      int pos = len - 1;
      while (pos >= 0 && digits[static_cast<std::size_t>(pos)] == kActionCount - 1)
        digits[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
      ++digits[static_cast<std::size_t>(pos)];
    }
  }
  throw NoSolution("no successful routine of length <= " + std::to_string(max_len));
}

std::pair<Routine, core::Verdict> compress_routine(const std::vector<ExecutionTrace>& traces,
                                                   int k_verify) {
  const ExecutionTrace& source = shortest_success(traces);
  Routine candidate = greedy_compress(source);
  int ok = 0;
  for (int i = 0; i < k_verify; ++i) ok += execute_routine(candidate).success ? 1 : 0;
  const double score = k_verify > 0 ? static_cast<double>(ok) / k_verify : 0.0;
  if (k_verify > 0 && ok == k_verify && candidate.size() <= source.length())
    return {candidate, core::Verdict::pass(score)};
  return {candidate, core::Verdict::fail(score)};
}

Config config_from_json(const nlohmann::json& params) {
  Config c;
  core::ParamReader(params, "routine")
      .read("trial_budget", c.trial_budget)
      .read("random_min_len", c.random_min_len)
      .read("random_max_len", c.random_max_len)
      .read("rl_epsilon", c.rl_epsilon)
      .read("exploration_episodes", c.exploration_episodes)
      .read("k_verify", c.k_verify)
      .read("loop_horizon", c.loop_horizon)
      .finish();
  if (c.trial_budget < 1) throw std::invalid_argument("routine: trial_budget must be >= 1");
  if (c.random_min_len < 1 || c.random_max_len < c.random_min_len ||
      c.random_max_len > static_cast<int>(kRoutineCap))
    throw std::invalid_argument("routine: bad random length range");
  if (c.rl_epsilon < 0.0 || c.rl_epsilon > 1.0)
    throw std::invalid_argument("routine: rl_epsilon must be in [0, 1]");
  if (c.exploration_episodes < 1) throw std::invalid_argument("routine: exploration_episodes >= 1");
  if (c.k_verify < 1) throw std::invalid_argument("routine: k_verify must be >= 1");
  if (c.loop_horizon < 1) throw std::invalid_argument("routine: loop_horizon must be >= 1");
  return c;
}

core::LoopState initial_state() {
  core::LoopState s;
  const Routine legacy = legacy_routine();
  s.objects.routines.push_back({kGoal, names_of(legacy)});
  s.objects.relations.action.push_back({names_of(legacy), kGoal});
  return s;
}

namespace {

// Executes the stored routine each step; the legacy one fails on this machine.
class MachineEnv : public core::Environment {
 public:
  core::Observation observe(const core::LoopState& state, Rng&) override {
    const core::ActionRoutine* r = state.objects.routine_for(kGoal);
    Routine routine = r ? from_names(r->actions) : Routine{};
    return encode(execute_routine(routine), "routine_execution");
  }
};

struct ProposedCounters {
  int trials = 0;
  int failed = 0;
};

core::OperatorBundle proposed_operators(const Config& config, ProposedCounters& counters) {
  core::OperatorBundle ops;
  ops.evaluate = [](const core::Observation& obs, const core::LearningObjectSet&,
                    const core::KnowledgeState&) {
    core::SufficiencyAssessment q;
    q.sufficient = obs.label == "success";
    q.diagnostics["executed_length"] = static_cast<double>(obs.values.size());
    if (!q.sufficient) q.deficit = core::UpdateTarget{core::UpdateComponent::Routine, kGoal};
    return q;
  };
  ops.think = [&config](const core::SufficiencyAssessment& q, const core::Observation&,
                        const core::LearningObjectSet&, const core::KnowledgeState&,
                        const core::ThinkingStrategy&) {
    core::LearningPlan plan;
    plan.target = *q.deficit;
    plan.evidence_requests.push_back(
        {kExploreSource, static_cast<std::size_t>(config.exploration_episodes),
         static_cast<double>(config.exploration_episodes)});
    plan.verification_protocol["k_verify"] = config.k_verify;
    return plan;
  };
  ops.collect = [&counters](const core::LearningPlan& plan, const core::Observation&,
                            const core::KnowledgeState&, Rng&) {
    core::EvidenceBatch batch;
    for (const auto& req : plan.evidence_requests) {
      for (std::size_t i = 0; i < req.quantity; ++i) {
        ExecutionTrace trace = execute_routine(reactive_exploration());
        ++counters.trials;
        if (!trace.success) ++counters.failed;
        batch.add({encode(trace, "trace"), req.source, core::EvidenceOrigin::ActiveInteraction, 1.0});
      }
    }
    return batch;
  };
  ops.construct_data = [](const core::EvidenceBatch& batch, const core::LearningPlan& plan,
                          const core::KnowledgeState&) {
    core::LearningMaterials d;
    d.target = plan.target;
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (batch.items()[i].payload.label == "success") d.training.push_back(i);
    return d;
  };
  ops.learn = [](const core::LearningMaterials& d, const core::EvidenceBatch& batch,
                 const core::LearningObjectSet& objects) {
    std::vector<ExecutionTrace> traces;
    for (std::size_t i : d.training) traces.push_back(execute_routine(decode(batch.items()[i].payload)));
    if (traces.empty()) {
      throw core::LoopError(core::LoopErrorCode::OperatorFailure,
                            "routine learn: no successful exploration trace");
    }
    const ExecutionTrace& source = shortest_success(traces);
    Routine candidate = greedy_compress(source);
    core::LearningResult L;
    L.candidate.kind = core::UpdateKind::ReplaceRoutine;
    L.candidate.name = kGoal;
    L.candidate.actions = names_of(candidate);
    const core::ActionRoutine* current = objects.routine_for(kGoal);
    const double old_len = current ? static_cast<double>(current->actions.size()) : kLegacyLength;
    L.fit_metrics["source_length"] = static_cast<double>(source.length());
    L.fit_metrics["candidate_length"] = static_cast<double>(candidate.size());
    L.fit_metrics["improvement"] = 1.0 - static_cast<double>(candidate.size()) / old_len;
    return L;
  };
  ops.verify = [&config, &counters](const core::LearningResult& L, const core::LearningMaterials&,
                                    const core::EvidenceBatch&, const core::KnowledgeState&) {
    // The k_verify re-executions form one verification pass.
    const Routine candidate = from_names(L.candidate.actions);
    int ok = 0;
    for (int i = 0; i < config.k_verify; ++i) ok += execute_routine(candidate).success ? 1 : 0;
    ++counters.trials;
    if (ok != config.k_verify) ++counters.failed;
    const double score = static_cast<double>(ok) / config.k_verify;
    const bool shorter = static_cast<double>(candidate.size()) <= L.fit_metrics.at("source_length");
    return ok == config.k_verify && shorter ? core::Verdict::pass(score) : core::Verdict::fail(score);
  };
  ops.improve_thinking = [](const core::ThinkingStrategy& phi, const core::KnowledgeState&,
                            const core::LearningResult&, const core::Verdict& v) {
    core::ThinkingStrategy next = phi;
    next.parameters[v.accepted ? "verified_routines" : "rejected_routines"] += 1.0;
    return next;
  };
  return ops;
}

}  // namespace

core::EpisodeRecord run_proposed_episode(const Config& config, Rng& rng, int* adaptation_time,
                                         int* failed_trials) {
  MachineEnv env;
  ProposedCounters counters;
  core::OperatorBundle ops = proposed_operators(config, counters);
  core::EpisodeRecord rec = core::run_episode(initial_state(), env, ops,
                                              static_cast<std::size_t>(config.loop_horizon), rng);
  if (adaptation_time) *adaptation_time = counters.trials;
  if (failed_trials) *failed_trials = counters.failed;
  return rec;
}

RoundResult run_routine_method(Method method, const Config& config, Rng& rng) {
  RoundResult out;
  switch (method) {
    case Method::FixedRoutine: {
      const Routine legacy = legacy_routine();
      const ExecutionTrace t = execute_routine(legacy);
      out.success = t.success ? 1.0 : 0.0;
      out.solved = t.success;
      out.final_length = static_cast<double>(legacy.size());
      out.final_routine = legacy;
      break;
    }
    case Method::RandomSearch: {
      int successes = 0;
      double success_len = 0.0;
      const Routine* best = nullptr;
      std::vector<Routine> found;
      for (int trial = 0; trial < config.trial_budget; ++trial) {
        const auto len = rng.uniform_int(config.random_min_len, config.random_max_len);
        Routine r;
        for (std::int64_t i = 0; i < len; ++i) r.push_back(kAllActions[rng.index(kActionCount)]);
        const ExecutionTrace t = execute_routine(r);
        if (t.success) {
          ++successes;
          success_len += static_cast<double>(t.length());
          found.push_back(t.actions());
        }
      }
      for (const auto& r : found)
        if (best == nullptr || r.size() < best->size()) best = &r;
      out.adaptation_time = config.trial_budget;
      out.success = static_cast<double>(successes) / config.trial_budget;
      out.failed_trial_rate = 1.0 - out.success;
      out.solved = successes > 0;
      out.final_length = successes > 0 ? success_len / successes : kLegacyLength;
      out.final_routine = best ? *best : legacy_routine();
      break;
    }
    case Method::RLLike: {
      int n = 1;
      int trials = 0;
      int failures = 0;
      while (trials < config.trial_budget) {
        ++trials;
        Routine hypothesis{Action::PowerOn};
        hypothesis.insert(hypothesis.end(), static_cast<std::size_t>(n), Action::PressProgram);
        hypothesis.push_back(Action::Confirm);
        Routine executed = hypothesis;
        const bool distracted = rng.bernoulli(config.rl_epsilon);
        if (distracted) {
          const Action extra = kAllActions[rng.index(kActionCount)];
          const std::size_t pos = rng.index(executed.size() + 1);
          executed.insert(executed.begin() + static_cast<std::ptrdiff_t>(pos), extra);
        }
        const bool ok = execute_routine(executed).success;
        if (ok && !distracted) {
          out.solved = true;
          out.final_routine = hypothesis;
          break;
        }
        // A perturbed run says nothing about the hypothesis either way; retry it.
        if (!ok) ++failures;
        if (!ok && !distracted) ++n;
      }
      out.success = out.solved ? 1.0 : 0.0;
      out.adaptation_time = trials;
      out.failed_trial_rate = static_cast<double>(failures) / trials;
      if (!out.solved) out.final_routine = legacy_routine();
      out.final_length = static_cast<double>(out.final_routine.size());
      break;
    }
    case Method::Proposed: {
      int time = 0;
      int failed = 0;
      core::EpisodeRecord rec = run_proposed_episode(config, rng, &time, &failed);
      const core::ActionRoutine* r = rec.final_state.objects.routine_for(kGoal);
      out.final_routine = from_names(r->actions);
      const ExecutionTrace t = execute_routine(out.final_routine);
      out.success = t.success ? 1.0 : 0.0;
      out.solved = t.success;
      out.final_length = static_cast<double>(out.final_routine.size());
      out.adaptation_time = time;
      out.failed_trial_rate = time > 0 ? static_cast<double>(failed) / time : 0.0;
      break;
    }
  }
  out.compression_ratio = out.solved ? compression(out.final_length) : 0.0;
  return out;
}

}  // namespace uptodate::routine
