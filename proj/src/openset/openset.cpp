#include "uptodate/openset/openset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "uptodate/core/loop.hpp"
#include "uptodate/core/params.hpp"

namespace uptodate::openset {

namespace {

constexpr const char* kModelId = "centroid";
constexpr const char* kBufferSource = "unknown_buffer";
constexpr const char* kCurrentSource = "current";

constexpr std::array<TrueCategory, kKnownCount> kKnown = {TrueCategory::Apple, TrueCategory::Banana,
                                                          TrueCategory::Cup};

TrueCategory random_known(Rng& rng) { return kKnown[rng.index(kKnownCount)]; }

Vec from_values(const std::vector<double>& v) {
  Vec x{};
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = v.at(i);
  return x;
}

}  // namespace

std::string category_name(TrueCategory c) {
  switch (c) {
    case TrueCategory::Apple: return "apple";
    case TrueCategory::Banana: return "banana";
    case TrueCategory::Cup: return "cup";
    case TrueCategory::Orange: return "orange";
  }
  return "?";
}

double distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Vec mean_of(const std::vector<Vec>& points) {
  Vec m{};
  if (points.empty()) return m;
  for (const auto& p : points)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += p[i];
  for (auto& v : m) v /= static_cast<double>(points.size());
  return m;
}

Spec Spec::calibrated() {
  Spec s;
  s.means = {{
      {0.20, 0.80, 0.40, 0.30},  // apple
      {0.80, 0.20, 0.50, 0.30},  // banana
      {0.50, 0.50, 0.80, 0.80},  // cup
      {0.52, 0.78, 0.48, 0.48},  // orange: nearest known is apple, about 7.5 sigma away
  }};
  s.sigma = 0.05;
  return s;
}

Sample sample_category(const Spec& spec, TrueCategory c, Rng& rng) {
  Sample s;
  s.truth = c;
  const Vec& mu = spec.mean(c);
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    double v = mu[i] + spec.sigma * rng.normal();
    while (v < 0.0 || v > 1.0) v = mu[i] + spec.sigma * rng.normal();
    s.x[i] = v;
  }
  return s;
}

Vec uniform_point(Rng& rng) {
  Vec x{};
  for (auto& v : x) v = rng.uniform01();
  return x;
}

std::size_t CentroidModel::nearest(const Vec& x) const {
  std::size_t best = 0;
  double best_d = distance(x, centroids.at(0));
  for (std::size_t i = 1; i < centroids.size(); ++i) {
    const double d = distance(x, centroids[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

const std::string& CentroidModel::classify(const Vec& x) const {
  const std::size_t i = nearest(x);
  return distance(x, centroids[i]) > tau ? kUnknown : labels[i];
}

CentroidModel fit_centroid_model(const std::vector<LabeledPoint>& train, double q,
                                 std::size_t replay_capacity, std::size_t min_per_label) {
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("fit_centroid_model: q must be in (0, 1]");
  CentroidModel m;
  std::vector<std::vector<Vec>> members;
  for (const auto& p : train) {
    auto it = std::find(m.labels.begin(), m.labels.end(), p.label);
    std::size_t idx = static_cast<std::size_t>(it - m.labels.begin());
    if (it == m.labels.end()) {
      m.labels.push_back(p.label);
      members.emplace_back();
    }
    members[idx].push_back(p.x);
  }
  if (m.labels.empty()) throw InsufficientData("fit_centroid_model: no training data");
  std::vector<double> dists;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].size() < min_per_label)
      throw InsufficientData("fit_centroid_model: too few samples for '" + m.labels[i] + "'");
    m.centroids.push_back(mean_of(members[i]));
    for (const auto& x : members[i]) dists.push_back(distance(x, m.centroids.back()));
    const std::size_t keep = std::min(replay_capacity, members[i].size());
    m.replay.emplace_back(members[i].begin(), members[i].begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(dists.begin(), dists.end());
  // Nearest rank: smallest value with at least q of the mass at or below it.
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(dists.size())));
  m.tau = dists[std::max<std::size_t>(rank, 1) - 1];
  return m;
}

double UnknownBuffer::cohesion() const {
  if (samples.empty()) return 0.0;
  const Vec c = centroid();
  double s = 0.0;
  for (const auto& x : samples) s += distance(x, c);
  return s / static_cast<double>(samples.size());
}

core::Verdict verify_new_category(const UnknownBuffer& buffer, const CentroidModel& model,
                                  const VerifyThresholds& t) {
  if (!(t.cohesion > 0.0 && t.separation > 0.0) || t.m_min == 0)
    throw std::invalid_argument("verify_new_category: thresholds must be positive");
  if (buffer.count() < t.m_min)
    return core::Verdict::insufficient(static_cast<double>(buffer.count()) / static_cast<double>(t.m_min));
  const Vec c = buffer.centroid();
  double separation = std::numeric_limits<double>::infinity();
  for (const auto& k : model.centroids) separation = std::min(separation, distance(c, k));
  const bool ok = buffer.cohesion() <= t.cohesion && separation >= t.separation;
  return ok ? core::Verdict::pass(separation) : core::Verdict::fail(separation);
}

CentroidModel expand_model(const CentroidModel& model, const std::string& new_category,
                           const UnknownBuffer& buffer, double eps_c, std::size_t replay_capacity) {
  if (std::find(model.labels.begin(), model.labels.end(), new_category) != model.labels.end())
    throw DuplicateCategory("expand_model: category '" + new_category + "' already exists");
  if (buffer.count() == 0) throw InsufficientData("expand_model: empty buffer");
  CentroidModel next = model;
  for (std::size_t i = 0; i < next.centroids.size(); ++i) {
    if (next.replay[i].empty()) continue;
    const Vec target = mean_of(next.replay[i]);
    for (std::size_t k = 0; k < target.size(); ++k) {
      const double step = std::clamp(target[k] - next.centroids[i][k], -eps_c, eps_c);
      next.centroids[i][k] += step;
    }
  }
  next.labels.push_back(new_category);
  next.centroids.push_back(buffer.centroid());
  const std::size_t keep = std::min(replay_capacity, buffer.count());
  next.replay.emplace_back(buffer.samples.begin(),
                           buffer.samples.begin() + static_cast<std::ptrdiff_t>(keep));
  return next;
}

Config config_from_json(const nlohmann::json& params) {
  Config c;
  std::optional<double> cohesion;
  std::optional<double> separation;
  int m_min = static_cast<int>(c.thresholds.m_min);
  nlohmann::json spec_json;
  core::ParamReader(params, "openset")
      .read("train_per_category", c.train_per_category)
      .read("quantile", c.quantile)
      .read("replay_capacity", c.replay_capacity)
      .read("m_min", m_min)
      .read("theta_cohesion", cohesion)
      .read("theta_separation", separation)
      .read("eps_c", c.eps_c)
      .read("p_rand", c.p_rand)
      .read("noise_batch_fraction", c.noise_batch_fraction)
      .read("random_windows", c.random_windows)
      .read("stream_size", c.stream_size)
      .read("orange_fraction", c.orange_fraction)
      .read("forgetting_holdout", c.forgetting_holdout)
      .read("mixed_holdout_per_category", c.mixed_holdout_per_category)
      .read("model_success_accuracy", c.model_success_accuracy)
      .read("spec", spec_json)
      .finish();
  if (!spec_json.is_null()) {
    core::ParamReader r(spec_json, "openset.spec");
    std::map<std::string, std::vector<double>> means;
    r.read("sigma", c.spec.sigma).read("means", means).finish();
    for (const auto& [name, mu] : means) {
      bool found = false;
      for (int k = 0; k < kCategoryCount; ++k) {
        if (category_name(static_cast<TrueCategory>(k)) != name) continue;
        if (mu.size() != static_cast<std::size_t>(kDim))
          throw std::invalid_argument("openset: mean for '" + name + "' must have 4 components");
        for (std::size_t i = 0; i < mu.size(); ++i) c.spec.means[static_cast<std::size_t>(k)][i] = mu[i];
        found = true;
      }
      if (!found) throw std::invalid_argument("openset: unknown category '" + name + "'");
    }
  }
  if (m_min < 1) throw std::invalid_argument("openset: m_min must be >= 1");
  c.thresholds.m_min = static_cast<std::size_t>(m_min);
  const double sd = c.spec.sigma * std::sqrt(static_cast<double>(kDim));
  c.thresholds.cohesion = cohesion.value_or(2.0 * sd);
  c.thresholds.separation = separation.value_or(3.0 * sd);
  if (c.train_per_category < 50) throw std::invalid_argument("openset: train_per_category must be >= 50");
  if (c.stream_size < 1 || c.random_windows < 1)
    throw std::invalid_argument("openset: stream_size and random_windows must be >= 1");
  return c;
}

namespace {

struct RoundData {
  std::vector<LabeledPoint> train;
  std::vector<Sample> known_holdout;
  std::vector<Sample> mixed_holdout;
  std::vector<Sample> stream;
};

RoundData draw_round(const Config& cfg, Rng& rng) {
  RoundData d;
  for (TrueCategory c : kKnown)
    for (int i = 0; i < cfg.train_per_category; ++i)
      d.train.push_back({category_name(c), sample_category(cfg.spec, c, rng).x});
  for (int i = 0; i < cfg.forgetting_holdout; ++i)
    d.known_holdout.push_back(sample_category(cfg.spec, random_known(rng), rng));
  for (int k = 0; k < kCategoryCount; ++k)
    for (int i = 0; i < cfg.mixed_holdout_per_category; ++i)
      d.mixed_holdout.push_back(sample_category(cfg.spec, static_cast<TrueCategory>(k), rng));
  for (int i = 0; i < cfg.stream_size; ++i) {
    const TrueCategory c = rng.bernoulli(cfg.orange_fraction) ? TrueCategory::Orange : random_known(rng);
    d.stream.push_back(sample_category(cfg.spec, c, rng));
  }
  return d;
}

// Label each created category with the true category that supplied most of its
// source samples; "noise" when the source was injected noise.
struct Creation {
  std::string label;
  std::string source_majority;
};

std::string majority(const std::vector<TrueCategory>& truths) {
  std::array<int, kCategoryCount> counts{};
  for (TrueCategory t : truths) ++counts[static_cast<std::size_t>(t)];
  const auto it = std::max_element(counts.begin(), counts.end());
  return category_name(static_cast<TrueCategory>(it - counts.begin()));
}

double known_accuracy(const CentroidModel& m, const std::vector<Sample>& holdout) {
  std::size_t ok = 0;
  for (const auto& s : holdout) ok += m.classify(s.x) == category_name(s.truth) ? 1 : 0;
  return holdout.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(holdout.size());
}

double mixed_accuracy(const CentroidModel& m, const std::vector<Sample>& holdout,
                      const std::map<std::string, std::string>& created_to_truth) {
  std::size_t ok = 0;
  for (const auto& s : holdout) {
    const std::string& label = m.classify(s.x);
    auto it = created_to_truth.find(label);
    const std::string& as_truth = it == created_to_truth.end() ? label : it->second;
    ok += as_truth == category_name(s.truth) ? 1 : 0;
  }
  return holdout.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(holdout.size());
}

double detection_rate(const CentroidModel& m, const std::vector<Sample>& stream) {
  std::size_t orange = 0;
  std::size_t flagged = 0;
  for (const auto& s : stream) {
    if (s.truth != TrueCategory::Orange) continue;
    ++orange;
    flagged += m.is_unknown(s.x) ? 1 : 0;
  }
  return orange == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(orange);
}

std::string novel_name(std::size_t k) { return "novel_" + std::to_string(k); }

// Agent side of the Proposed method: the centroid model, the buffer of
// unexplained samples, and the creations made so far.
struct Agent {
  const Config& cfg;
  CentroidModel model;
  UnknownBuffer buffer;
  UnknownBuffer pending;  // verified core awaiting expansion
  std::vector<Creation> created;
};

// Presents the stream one sample per step. Ground truth stays here and is only
// used for scoring.
class StreamEnv : public core::Environment {
 public:
  StreamEnv(const std::vector<Sample>& stream, Agent& agent) : stream_(stream), agent_(agent) {}

  core::Observation observe(const core::LoopState& state, Rng&) override {
    const Sample& s = stream_.at(static_cast<std::size_t>(state.time_step));
    core::Observation obs;
    obs.kind = "sample";
    obs.values.assign(s.x.begin(), s.x.end());
    return obs;
  }

  void commit(const core::LearningObjectSet&, const core::LearningResult& result) override {
    // pending holds batch positions, which line up with the agent's buffer order.
    std::vector<TrueCategory> truths;
    for (auto i : agent_.pending.timestamps) {
      const auto t = agent_.buffer.timestamps.at(static_cast<std::size_t>(i));
      truths.push_back(stream_.at(static_cast<std::size_t>(t)).truth);
    }
    agent_.model = expand_model(agent_.model, result.candidate.name, agent_.pending, agent_.cfg.eps_c,
                                static_cast<std::size_t>(agent_.cfg.replay_capacity));
    agent_.created.push_back({result.candidate.name, majority(truths)});
    agent_.buffer.clear();
    agent_.pending.clear();
  }

 private:
  const std::vector<Sample>& stream_;
  Agent& agent_;
};

UnknownBuffer buffer_from(const core::EvidenceBatch& batch, const std::vector<std::size_t>& idx) {
  UnknownBuffer b;
  for (std::size_t i : idx) b.add(from_values(batch.items()[i].payload.values), i);
  return b;
}

Vec coordinate_median(std::vector<Vec> points) {
  Vec m{};
  for (std::size_t k = 0; k < m.size(); ++k) {
    std::vector<double> col;
    for (const auto& p : points) col.push_back(p[k]);
    std::sort(col.begin(), col.end());
    const std::size_t n = col.size();
    m[k] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return m;
}

core::OperatorBundle proposed_operators(Agent& agent) {
  core::OperatorBundle ops;
  ops.evaluate = [&agent](const core::Observation& obs, const core::LearningObjectSet&,
                          const core::KnowledgeState&) {
    core::SufficiencyAssessment q;
    const Vec x = from_values(obs.values);
    const double d = distance(x, agent.model.centroids[agent.model.nearest(x)]);
    q.diagnostics["nearest_distance"] = d;
    q.sufficient = d <= agent.model.tau;
    if (!q.sufficient) q.deficit = core::UpdateTarget{core::UpdateComponent::OutputSet, "unexplained sample"};
    return q;
  };
  ops.think = [&agent](const core::SufficiencyAssessment& q, const core::Observation&,
                       const core::LearningObjectSet&, const core::KnowledgeState&,
                       const core::ThinkingStrategy&) {
    core::LearningPlan plan;
    plan.target = *q.deficit;
    plan.evidence_requests.push_back({kCurrentSource, 1, 0.0});
    if (agent.buffer.count() > 0)
      plan.evidence_requests.push_back({kBufferSource, agent.buffer.count(), 0.0});
    plan.verification_protocol["m_min"] = static_cast<double>(agent.cfg.thresholds.m_min);
    plan.verification_protocol["theta_cohesion"] = agent.cfg.thresholds.cohesion;
    plan.verification_protocol["theta_separation"] = agent.cfg.thresholds.separation;
    return plan;
  };
  ops.collect = [&agent](const core::LearningPlan&, const core::Observation& obs,
                         const core::KnowledgeState& knowledge, Rng&) {
    core::EvidenceBatch batch;
    for (const auto& x : agent.buffer.samples) {
      core::Observation past{"sample", "", std::vector<double>(x.begin(), x.end())};
      batch.add({past, kBufferSource, core::EvidenceOrigin::HistoricalMemory, 0.0});
    }
    batch.add({obs, kCurrentSource, core::EvidenceOrigin::CurrentObservation, 0.0});
    // Time index of the current sample equals the number of steps taken so far.
    agent.buffer.add(from_values(obs.values), knowledge.size());
    return batch;
  };
  // Training material is the cohesive core of the evidence: items within tau of
  // the coordinate-wise median. A stray known sample must not drag the new centroid.
  ops.construct_data = [&agent](const core::EvidenceBatch& batch, const core::LearningPlan& plan,
                                const core::KnowledgeState&) {
    core::LearningMaterials d;
    d.target = plan.target;
    std::vector<Vec> points;
    for (const auto& item : batch.items()) points.push_back(from_values(item.payload.values));
    const Vec center = coordinate_median(points);
    for (std::size_t i = 0; i < points.size(); ++i)
      (distance(points[i], center) <= agent.model.tau ? d.training : d.validation).push_back(i);
    return d;
  };
  ops.learn = [&agent](const core::LearningMaterials& d, const core::EvidenceBatch& batch,
                       const core::LearningObjectSet& objects) {
    const UnknownBuffer b = buffer_from(batch, d.training);
    core::LearningResult L;
    L.candidate.kind = core::UpdateKind::AddCategory;
    L.candidate.name = novel_name(agent.created.size() + 1);
    double separation = std::numeric_limits<double>::infinity();
    for (const auto& k : agent.model.centroids) separation = std::min(separation, distance(b.centroid(), k));
    L.fit_metrics["count"] = static_cast<double>(b.count());
    L.fit_metrics["cohesion"] = b.cohesion();
    L.fit_metrics["separation"] = separation;
    core::ModelHandle model = objects.model;
    model.outputs.insert(L.candidate.name);
    model.revision += 1;
    L.candidate.model = model;
    return L;
  };
  ops.verify = [&agent](const core::LearningResult&, const core::LearningMaterials& d,
                        const core::EvidenceBatch& batch, const core::KnowledgeState&) {
    const UnknownBuffer core_buffer = buffer_from(batch, d.training);
    const core::Verdict v = verify_new_category(core_buffer, agent.model, agent.cfg.thresholds);
    if (v.accepted) agent.pending = core_buffer;
    return v;
  };
  ops.improve_thinking = [](const core::ThinkingStrategy& phi, const core::KnowledgeState&,
                            const core::LearningResult&, const core::Verdict& v) {
    core::ThinkingStrategy next = phi;
    if (v.reason == core::VerdictReason::FailedThreshold) next.parameters["failed_verifications"] += 1.0;
    if (v.accepted) next.parameters["accepted_categories"] += 1.0;
    return next;
  };
  return ops;
}

core::LoopState initial_state(const CentroidModel& model) {
  core::LoopState s;
  for (const auto& l : model.labels) s.objects.outputs.insert(l);
  for (const char* f : {"hue", "roundness", "size", "texture"}) s.objects.features.insert(f);
  s.objects.model.id = kModelId;
  s.objects.model.inputs = s.objects.features;
  s.objects.model.outputs = s.objects.outputs;
  s.objects.relations.recognition =
      core::RecognitionRelation{s.objects.features, kModelId, 0, s.objects.outputs};
  return s;
}

}  // namespace

RoundResult run_openset_method(Method method, const Config& cfg, Rng& rng) {
  const RoundData data = draw_round(cfg, rng);
  const CentroidModel initial =
      fit_centroid_model(data.train, cfg.quantile, static_cast<std::size_t>(cfg.replay_capacity));
  RoundResult out;
  if (method == Method::ClosedSet) return out;  // never flags, never grows

  out.unknown_detection_rate = detection_rate(initial, data.stream);
  if (method == Method::OpenSetOnly) return out;

  CentroidModel final_model = initial;
  std::vector<Creation> created;

  if (method == Method::RandomExpansion) {
    const std::size_t windows = static_cast<std::size_t>(cfg.random_windows);
    const std::size_t n = data.stream.size();
    for (std::size_t w = 0; w < windows; ++w) {
      UnknownBuffer batch;
      std::vector<TrueCategory> truths;
      for (std::size_t i = w * n / windows; i < (w + 1) * n / windows; ++i) {
        // Batches come from the shared detector; nothing checks whether a
        // previous creation already explains them.
        if (!initial.is_unknown(data.stream[i].x)) continue;
        batch.add(data.stream[i].x, i);
        truths.push_back(data.stream[i].truth);
      }
      if (batch.count() == 0) continue;
      std::string source = majority(truths);
      if (rng.bernoulli(cfg.noise_batch_fraction)) {
        const std::size_t m = batch.count();
        batch.clear();
        for (std::size_t i = 0; i < m; ++i) batch.add(uniform_point(rng), 0);
        source = "noise";
      }
      if (!rng.bernoulli(cfg.p_rand)) continue;
      const std::string name = novel_name(created.size() + 1);
      final_model = expand_model(final_model, name, batch, cfg.eps_c,
                                 static_cast<std::size_t>(cfg.replay_capacity));
      created.push_back({name, source});
    }
  } else {
    Agent agent{cfg, initial, {}, {}, {}};
    StreamEnv env(data.stream, agent);
    const core::OperatorBundle ops = proposed_operators(agent);
    core::LoopState state = initial_state(initial);
    for (std::size_t t = 0; t < data.stream.size(); ++t) state = core::run_step(state, env, ops, rng).state;
    final_model = agent.model;
    created = agent.created;
  }

  std::map<std::string, std::string> created_to_truth;
  for (const auto& c : created) {
    created_to_truth[c.label] = c.source_majority;
    if (c.source_majority != category_name(TrueCategory::Orange)) ++out.false_categories;
  }
  out.categories_created = static_cast<int>(created.size());
  out.new_category_formed_correctly =
      created.size() == 1 && created.front().source_majority == category_name(TrueCategory::Orange);
  out.mixed_accuracy = mixed_accuracy(final_model, data.mixed_holdout, created_to_truth);
  out.model_update_success =
      out.new_category_formed_correctly && out.mixed_accuracy >= cfg.model_success_accuracy;
  if (!created.empty())
    out.forgetting = std::max(0.0, known_accuracy(initial, data.known_holdout) -
                                       known_accuracy(final_model, data.known_holdout));
  return out;
}

}  // namespace uptodate::openset
