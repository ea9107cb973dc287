#include "uptodate/evidence/evidence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "uptodate/core/loop.hpp"
#include "uptodate/core/params.hpp"

namespace uptodate::evidence {

namespace {

constexpr std::array<std::string_view, kSourceCount> kSourceNames = {
    "color",           "shape",        "texture",            "position",          "hist_success_seq",
    "hist_fail_seq",   "unknown_clusters", "random_noise", "past_similar_tasks", "partial_input_match"};
constexpr std::array<std::string_view, kTaskCount> kTaskNames = {
    "object_recognition", "routine_reconstruction", "category_discovery"};

constexpr const char* kModelId = "evidence_selector";

Source source_at(int i) { return static_cast<Source>(i); }
std::size_t si(Source s) { return static_cast<std::size_t>(s); }

std::string pair_key(const char* prefix, Task t, Source s) {
  return std::string(prefix) + "/" + std::string(task_name(t)) + "/" + std::string(source_name(s));
}

}  // namespace

std::string_view source_name(Source s) { return kSourceNames[si(s)]; }
std::string_view task_name(Task t) { return kTaskNames[static_cast<std::size_t>(t)]; }

Source parse_source(std::string_view name) {
  for (int i = 0; i < kSourceCount; ++i)
    if (kSourceNames[static_cast<std::size_t>(i)] == name) return source_at(i);
  throw std::invalid_argument("unknown evidence source '" + std::string(name) + "'");
}

Task parse_task(std::string_view name) {
  for (int i = 0; i < kTaskCount; ++i)
    if (kTaskNames[static_cast<std::size_t>(i)] == name) return static_cast<Task>(i);
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

Pool pool_of(Source s) {
  switch (s) {
    case Source::Color:
    case Source::Shape:
    case Source::Texture:
    case Source::Position:
    case Source::RandomNoise:
      return Pool::Direct;
    default:
      return Pool::Historical;
  }
}

CostTable default_costs() {
  // color shape texture position hist_success hist_fail clusters noise past_similar partial_match
  return {1, 1, 1, 2, 1, 3, 1, 5, 4, 5};
}

UsefulnessMap UsefulnessMap::shipped() {
  UsefulnessMap m;
  m.useful[0] = {Source::Color, Source::Shape, Source::PastSimilarTasks};
  m.useful[1] = {Source::HistSuccessSeq, Source::PastSimilarTasks, Source::PartialInputMatch};
  m.useful[2] = {Source::UnknownClusters, Source::Color, Source::HistSuccessSeq};
  return m;
}

void UsefulnessMap::validate(const CostTable& costs) const {
  for (int t = 0; t < kTaskCount; ++t) {
    const auto& u = useful[static_cast<std::size_t>(t)];
    const std::string name(task_name(static_cast<Task>(t)));
    if (u.size() != 3) throw std::invalid_argument("usefulness map: " + name + " needs 3 sources");
    bool cheap = false;
    bool historical = false;
    for (Source s : u) {
      cheap = cheap || costs[si(s)] == 1.0;
      historical = historical || pool_of(s) == Pool::Historical;
    }
    if (!cheap) throw std::invalid_argument("usefulness map: " + name + " has no cost-1 source");
    if (!historical) throw std::invalid_argument("usefulness map: " + name + " has no historical source");
  }
}

bool verify_selection(Task task, Source source, const UsefulnessMap& map) {
  return map.of(task).contains(source);
}

Config config_from_json(const nlohmann::json& params) {
  Config c;
  std::map<std::string, double> costs;
  std::map<std::string, std::vector<std::string>> useful;
  core::ParamReader(params, "evidence")
      .read("trials", c.trials)
      .read("scope_fraction", c.scope_fraction)
      .read("epsilon0", c.epsilon0)
      .read("epsilon_decay", c.epsilon_decay)
      .read("epsilon_floor", c.epsilon_floor)
      .read("prior", c.prior)
      .read("feedback_flip", c.feedback_flip)
      .read("costs", costs)
      .read("usefulness", useful)
      .finish();
  for (const auto& [name, cost] : costs) {
    if (cost < 0.0) throw std::invalid_argument("evidence: negative cost for '" + name + "'");
    c.costs[si(parse_source(name))] = cost;
  }
  for (const auto& [task, sources] : useful) {
    auto& set = c.map.useful[static_cast<std::size_t>(parse_task(task))];
    set.clear();
    for (const auto& s : sources) set.insert(parse_source(s));
  }
  c.map.validate(c.costs);
  if (c.trials < 1) throw std::invalid_argument("evidence: trials must be >= 1");
  if (c.epsilon_decay <= 0.0 || c.epsilon_decay > 1.0)
    throw std::invalid_argument("evidence: epsilon_decay must be in (0, 1]");
  return c;
}

double SelectionStrategy::estimate_or(Task t, Source s, double prior) const {
  auto it = estimate.find({t, s});
  return it == estimate.end() ? prior : it->second;
}

core::ThinkingStrategy SelectionStrategy::to_thinking() const {
  core::ThinkingStrategy phi;
  for (const auto& [k, v] : estimate) phi.parameters[pair_key("est", k.first, k.second)] = v;
  for (const auto& [k, v] : count) phi.parameters[pair_key("n", k.first, k.second)] = v;
  for (const auto& k : useless) phi.parameters[pair_key("useless", k.first, k.second)] = 1.0;
  for (const auto& [t, s] : last_failed)
    phi.parameters["last_failed/" + std::string(task_name(t))] = static_cast<double>(s);
  phi.parameters["epsilon"] = epsilon;
  return phi;
}

SelectionStrategy SelectionStrategy::from_thinking(const core::ThinkingStrategy& phi) {
  SelectionStrategy s;
  for (const auto& [key, value] : phi.parameters) {
    if (key == "epsilon") {
      s.epsilon = value;
      continue;
    }
    const auto a = key.find('/');
    const std::string kind = key.substr(0, a);
    const std::string rest = key.substr(a + 1);
    if (kind == "last_failed") {
      s.last_failed[parse_task(rest)] = static_cast<Source>(static_cast<int>(value));
      continue;
    }
    const auto b = rest.find('/');
    const std::pair<Task, Source> k{parse_task(rest.substr(0, b)), parse_source(rest.substr(b + 1))};
    if (kind == "est") s.estimate[k] = value;
    if (kind == "n") s.count[k] = static_cast<int>(value);
    if (kind == "useless") s.useless.insert(k);
  }
  return s;
}

std::vector<Source> eligible_pool(bool scope) {
  std::vector<Source> out;
  for (int i = 0; i < kSourceCount; ++i)
    if (!scope || pool_of(source_at(i)) == Pool::Historical) out.push_back(source_at(i));
  return out;
}

namespace {

// Expected cost per useful item; untried pairs use the prior.
double greedy_score(Task task, Source s, const SelectionStrategy& st, const Config& cfg) {
  const double e = st.estimate_or(task, s, cfg.prior);
  if (e <= 0.0) return -std::numeric_limits<double>::infinity();
  return -cfg.costs[si(s)] / e;
}

Source greedy(Task task, const std::vector<Source>& pool, const SelectionStrategy& st, const Config& cfg) {
  Source best = pool.front();
  double best_score = greedy_score(task, best, st, cfg);
  for (Source s : pool) {
    const double sc = greedy_score(task, s, st, cfg);
    // Ties prefer Historical sources, then enumeration order.
    const bool better = sc > best_score ||
                        (sc == best_score && pool_of(s) == Pool::Historical &&
                         pool_of(best) == Pool::Direct);
    if (better) {
      best = s;
      best_score = sc;
    }
  }
  return best;
}

// Untried sources that could beat what is already known to work for the task.
std::vector<Source> improvement_candidates(Task task, const std::vector<Source>& pool,
                                           const SelectionStrategy& st, const Config& cfg) {
  double best_known_cost = std::numeric_limits<double>::infinity();
  bool historical_known = false;
  for (int i = 0; i < kSourceCount; ++i) {
    const Source s = source_at(i);
    if (!st.tried(task, s) || st.estimate_or(task, s, cfg.prior) < 0.5) continue;
    best_known_cost = std::min(best_known_cost, cfg.costs[si(s)]);
    historical_known = historical_known || pool_of(s) == Pool::Historical;
  }
  std::vector<Source> out;
  for (Source s : pool) {
    if (st.tried(task, s)) continue;
    if (cfg.costs[si(s)] < best_known_cost || (pool_of(s) == Pool::Historical && !historical_known))
      out.push_back(s);
  }
  return out;
}

}  // namespace

Source select_evidence(Method method, Task task, const SelectionStrategy& st, bool scope,
                       const Config& cfg, Rng& rng) {
  const std::vector<Source> pool = eligible_pool(scope);
  switch (method) {
    case Method::NoImprovement:
      return pool[rng.index(pool.size())];
    case Method::MemoryOnly: {
      std::vector<Source> allowed;
      auto it = st.last_failed.find(task);
      for (Source s : pool)
        if (it == st.last_failed.end() || it->second != s) allowed.push_back(s);
      return allowed[rng.index(allowed.size())];
    }
    case Method::Proposed: {
      // Scope trials exploit only: the historical pool has to be right first time.
      if (!scope) {
        const auto candidates = improvement_candidates(task, pool, st, cfg);
        if (!candidates.empty() && rng.bernoulli(st.epsilon))
          return candidates[rng.index(candidates.size())];
      }
      return greedy(task, pool, st, cfg);
    }
  }
  return pool.front();
}

void record_feedback(SelectionStrategy& st, Task task, Source source, bool useful, const Config& cfg) {
  const std::pair<Task, Source> k{task, source};
  const int n = ++st.count[k];
  double& e = st.estimate[k];
  e += ((useful ? 1.0 : 0.0) - e) / n;
  if (!useful) {
    st.useless.insert(k);
    st.last_failed[task] = source;
  }
  st.epsilon = std::max(cfg.epsilon_floor, st.epsilon * cfg.epsilon_decay);
}

namespace {

core::UpdateComponent component_for(Task t) {
  switch (t) {
    case Task::ObjectRecognition: return core::UpdateComponent::InputFeatures;
    case Task::RoutineReconstruction: return core::UpdateComponent::Routine;
    case Task::CategoryDiscovery: return core::UpdateComponent::OutputSet;
  }
  return core::UpdateComponent::Model;
}

// Presents trial t's task (round robin) and draws whether it is a scope trial.
class TrialEnv : public core::Environment {
 public:
  explicit TrialEnv(const Config& cfg) : cfg_(cfg) {}

  core::Observation observe(const core::LoopState& state, Rng& rng) override {
    const bool scope = rng.bernoulli(cfg_.scope_fraction);
    core::Observation obs;
    obs.kind = "trial";
    obs.label = std::string(task_name(static_cast<Task>(state.time_step % kTaskCount)));
    obs.values = {scope ? 1.0 : 0.0};
    return obs;
  }

 private:
  const Config& cfg_;
};

core::OperatorBundle proposed_operators(const Config& cfg, Rng& agent_rng) {
  core::OperatorBundle ops;
  ops.evaluate = [](const core::Observation& obs, const core::LearningObjectSet&,
                    const core::KnowledgeState&) {
    // Every trial needs evidence chosen for it; nothing is ever already sufficient.
    core::SufficiencyAssessment q;
    q.sufficient = false;
    q.deficit = core::UpdateTarget{component_for(parse_task(obs.label)), obs.label};
    q.diagnostics["scope"] = obs.values.at(0);
    return q;
  };
  ops.think = [&cfg, &agent_rng](const core::SufficiencyAssessment& q, const core::Observation& obs,
                                 const core::LearningObjectSet&, const core::KnowledgeState&,
                                 const core::ThinkingStrategy& phi) {
    const Task task = parse_task(obs.label);
    const bool scope = obs.values.at(0) > 0.5;
    const SelectionStrategy st = SelectionStrategy::from_thinking(phi);
    const Source s = select_evidence(Method::Proposed, task, st, scope, cfg, agent_rng);
    core::LearningPlan plan;
    plan.target = *q.deficit;
    plan.evidence_requests.push_back({std::string(source_name(s)), 1, cfg.costs[si(s)]});
    plan.verification_protocol["repeated"] = st.useless.contains({task, s}) ? 1.0 : 0.0;
    return plan;
  };
  ops.collect = [&cfg](const core::LearningPlan& plan, const core::Observation& obs,
                       const core::KnowledgeState&, Rng&) {
    core::EvidenceBatch batch;
    for (const auto& req : plan.evidence_requests) {
      const Source s = parse_source(req.source);
      const auto origin = pool_of(s) == Pool::Historical ? core::EvidenceOrigin::HistoricalMemory
                                                         : core::EvidenceOrigin::CurrentObservation;
      batch.add({core::Observation{"evidence", obs.label, {}}, req.source, origin, cfg.costs[si(s)]});
    }
    return batch;
  };
  ops.construct_data = [](const core::EvidenceBatch& batch, const core::LearningPlan& plan,
                          const core::KnowledgeState&) {
    core::LearningMaterials d;
    d.target = plan.target;
    for (std::size_t i = 0; i < batch.size(); ++i) d.training.push_back(i);
    return d;
  };
  ops.learn = [](const core::LearningMaterials&, const core::EvidenceBatch& batch,
                 const core::LearningObjectSet& objects) {
    // Candidate: rely on this source in the recognition relation from now on.
    core::LearningResult L;
    L.candidate.kind = core::UpdateKind::ReviseRelation;
    L.candidate.relation_features = objects.relations.recognition->features;
    L.candidate.relation_features.insert(batch.items().front().source);
    L.fit_metrics["cost"] = batch.total_cost();
    L.fit_metrics["task"] = static_cast<double>(parse_task(batch.items().front().payload.label));
    L.fit_metrics["source"] = static_cast<double>(parse_source(batch.items().front().source));
    return L;
  };
  ops.verify = [&cfg, &agent_rng](const core::LearningResult&, const core::LearningMaterials&,
                                  const core::EvidenceBatch& batch, const core::KnowledgeState&) {
    const auto& item = batch.items().front();
    bool useful = verify_selection(parse_task(item.payload.label), parse_source(item.source), cfg.map);
    if (cfg.feedback_flip > 0.0 && agent_rng.bernoulli(cfg.feedback_flip)) useful = !useful;
    return useful ? core::Verdict::pass(1.0) : core::Verdict::fail(0.0);
  };
  ops.improve_thinking = [&cfg](const core::ThinkingStrategy& phi, const core::KnowledgeState&,
                                const core::LearningResult& L, const core::Verdict& v) {
    SelectionStrategy st = SelectionStrategy::from_thinking(phi);
    const auto task = static_cast<Task>(static_cast<int>(L.fit_metrics.at("task")));
    const auto source = static_cast<Source>(static_cast<int>(L.fit_metrics.at("source")));
    record_feedback(st, task, source, v.accepted, cfg);
    core::ThinkingStrategy next = st.to_thinking();
    next.version = phi.version;
    return next;
  };
  return ops;
}

core::LoopState initial_state(const Config& cfg) {
  core::LoopState s;
  core::LearningObjectSet& o = s.objects;
  for (int i = 0; i < kSourceCount; ++i) o.features.insert(std::string(source_name(source_at(i))));
  for (int t = 0; t < kTaskCount; ++t) o.outputs.insert(std::string(task_name(static_cast<Task>(t))));
  o.model.id = kModelId;
  o.model.inputs = o.features;
  o.model.outputs = o.outputs;
  o.relations.recognition = core::RecognitionRelation{{}, kModelId, 0, o.outputs};
  SelectionStrategy st;
  st.epsilon = cfg.epsilon0;
  s.strategy = st.to_thinking();
  return s;
}

}  // namespace

RoundResult run_evidence_method(Method method, const Config& config, Rng& rng) {
  RoundResult out;
  SelectionStrategy st;
  st.epsilon = config.epsilon0;

  TrialEnv env(config);
  core::OperatorBundle ops;
  core::LoopState state;
  if (method == Method::Proposed) {
    ops = proposed_operators(config, rng);
    state = initial_state(config);
  }

  for (int t = 0; t < config.trials; ++t) {
    SelectionRecord rec;
    rec.trial = t;
    rec.task = static_cast<Task>(t % kTaskCount);
    if (method == Method::Proposed) {
      const SelectionStrategy before = SelectionStrategy::from_thinking(state.strategy);
      core::StepRecord step = core::run_step(state, env, ops, rng);
      rec.scope = step.trace.observation.values.at(0) > 0.5;
      rec.source = parse_source(step.trace.evidence->items().front().source);
      rec.repeated_error = before.useless.contains({rec.task, rec.source});
      state = std::move(step.state);
    } else {
      core::LoopState probe;
      probe.time_step = static_cast<std::uint64_t>(t);
      rec.scope = env.observe(probe, rng).values.at(0) > 0.5;
      rec.source = select_evidence(method, rec.task, st, rec.scope, config, rng);
      rec.repeated_error = st.useless.contains({rec.task, rec.source});
      bool feedback = verify_selection(rec.task, rec.source, config.map);
      if (config.feedback_flip > 0.0 && rng.bernoulli(config.feedback_flip)) feedback = !feedback;
      record_feedback(st, rec.task, rec.source, feedback, config);
    }
    // Metrics use ground truth even when the feedback channel is noisy.
    rec.useful = verify_selection(rec.task, rec.source, config.map);
    rec.cost = config.costs[si(rec.source)];
    out.records.push_back(rec);
  }

  int regular = 0;
  int scope = 0;
  int scope_ok = 0;
  std::array<int, 3> window_n{};
  std::array<int, 3> window_ok{};
  double useful = 0.0;
  double cost = 0.0;
  double repeated = 0.0;
  for (const auto& r : out.records) {
    if (r.scope) {
      ++scope;
      scope_ok += r.useful ? 1 : 0;
      continue;
    }
    ++regular;
    useful += r.useful ? 1.0 : 0.0;
    cost += r.cost;
    repeated += r.repeated_error ? 1.0 : 0.0;
    const auto w = static_cast<std::size_t>(std::min(2, r.trial * 3 / config.trials));
    ++window_n[w];
    window_ok[w] += r.useful ? 1 : 0;
  }
  if (regular > 0) {
    out.useful_rate = useful / regular;
    out.avg_cost = cost / regular;
    out.repeated_error_rate = repeated / regular;
  }
  out.thinking_success_rate = out.useful_rate;
  out.scope_success_rate = scope > 0 ? static_cast<double>(scope_ok) / scope : 0.0;
  for (std::size_t w = 0; w < 3; ++w)
    out.useful_by_window[w] = window_n[w] > 0 ? static_cast<double>(window_ok[w]) / window_n[w] : 0.0;
  return out;
}

double blind_useful_expectation(const UsefulnessMap& map) {
  double sum = 0.0;
  for (const auto& u : map.useful) sum += static_cast<double>(u.size()) / kSourceCount;
  return sum / kTaskCount;
}

double blind_cost_expectation(const CostTable& costs) {
  double sum = 0.0;
  for (double c : costs) sum += c;
  return sum / kSourceCount;
}

}  // namespace uptodate::evidence
