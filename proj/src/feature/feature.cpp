#include "uptodate/feature/feature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "uptodate/core/loop.hpp"
#include "uptodate/core/params.hpp"

namespace uptodate::feature {

namespace {

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {"banana", "apple", "cup",
                                                                         "bottle"};
constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "shape", "size", "color", "texture", "position", "weight"};
constexpr std::array<int, kFeatureCount> kAlphabet = {3, 3, 4, 2, 2, 2};

const std::array<std::vector<std::string_view>, kFeatureCount> kValueNames = {{
    {"round", "elongated", "cylindrical"},
    {"small", "medium", "large"},
    {"yellow", "red", "white", "blue"},
    {"smooth", "rough"},
    {"table", "shelf"},
    {"light", "heavy"},
}};

constexpr const char* kModelId = "frequency_table";
constexpr const char* kVerifySource = "verify";
constexpr const char* kRankPrefix = "rank:";

std::size_t fi(Feature f) { return static_cast<std::size_t>(f); }

// Typical value gets `main`, the remainder is spread evenly.
std::vector<double> peaked(int n, int typical, double main) {
  std::vector<double> v(static_cast<std::size_t>(n), (1.0 - main) / (n - 1));
  v[static_cast<std::size_t>(typical)] = main;
  return v;
}

core::Observation encode(const ObjectSample& s) {
  core::Observation obs;
  obs.kind = "object";
  obs.label = std::string(category_name(s.category));
  for (int v : s.values) obs.values.push_back(v);
  return obs;
}

ObjectSample decode(const core::Observation& obs) {
  ObjectSample s;
  s.category = *parse_category(obs.label);
  for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = static_cast<int>(obs.values.at(i));
  return s;
}

FeatureSet features_of(const core::LearningObjectSet& objects) {
  FeatureSet out;
  for (const auto& name : objects.features) out.push_back(parse_feature(name));
  return make_set(out);
}

FeatureSet with(FeatureSet set, Feature f) {
  set.push_back(f);
  return make_set(std::move(set));
}

std::set<std::string> names_of(const FeatureSet& set) {
  std::set<std::string> out;
  for (Feature f : set) out.emplace(feature_name(f));
  return out;
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }
std::string_view feature_name(Feature f) { return kFeatureNames[fi(f)]; }
int alphabet_size(Feature f) { return kAlphabet[fi(f)]; }

std::string_view value_name(Feature f, int value) {
  return kValueNames[fi(f)].at(static_cast<std::size_t>(value));
}

Feature parse_feature(std::string_view name) {
  for (Feature f : kAllFeatures)
    if (feature_name(f) == name) return f;
  throw std::invalid_argument("unknown feature '" + std::string(name) + "'");
}

std::optional<Category> parse_category(std::string_view name) {
  for (int c = 0; c < kCategoryCount; ++c)
    if (kCategoryNames[static_cast<std::size_t>(c)] == name) return static_cast<Category>(c);
  return std::nullopt;
}

FeatureSet make_set(std::vector<Feature> features) {
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());
  return features;
}

FeatureSet parse_feature_list(std::string_view csv) {
  FeatureSet out;
  std::stringstream ss{std::string(csv)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_feature(item));
  }
  return make_set(std::move(out));
}

GenerativeSpec GenerativeSpec::calibrated() {
  // Per category (banana, apple, cup, bottle): typical shape, size and color,
  // and the offset of the first value's probability from 0.5 for the weak features.
  constexpr std::array<int, 4> shape = {1, 0, 2, 2};
  constexpr std::array<int, 4> size = {1, 0, 0, 2};
  constexpr std::array<int, 4> color = {0, 1, 2, 3};
  constexpr std::array<std::array<double, 4>, 3> weak = {{
      {0.05, -0.05, 0.0, 0.05},   // texture
      {0.0, 0.05, -0.05, 0.0},    // position
      {-0.05, 0.05, 0.05, -0.05}  // weight
  }};
  GenerativeSpec spec;
  for (std::size_t c = 0; c < 4; ++c) {
    spec.dist[c][fi(Feature::Shape)] = peaked(3, shape[c], 0.52);
    spec.dist[c][fi(Feature::Size)] = peaked(3, size[c], 0.48);
    spec.dist[c][fi(Feature::Color)] = peaked(4, color[c], 0.86);
    for (std::size_t w = 0; w < 3; ++w) {
      const double p = 0.5 + weak[w][c];
      spec.dist[c][fi(Feature::Texture) + w] = {p, 1.0 - p};
    }
  }
  return spec;
}

void GenerativeSpec::validate() const {
  for (int c = 0; c < kCategoryCount; ++c) {
    for (Feature f : kAllFeatures) {
      const auto& d = of(static_cast<Category>(c), f);
      if (static_cast<int>(d.size()) != alphabet_size(f))
        throw std::invalid_argument("spec: wrong alphabet size for " + std::string(feature_name(f)));
      double sum = 0.0;
      for (double p : d) {
        if (!(p >= 0.0)) throw std::invalid_argument("spec: negative probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("spec: distribution for " +
                                    std::string(category_name(static_cast<Category>(c))) + "/" +
                                    std::string(feature_name(f)) + " does not sum to 1");
    }
  }
}

GenerativeSpec spec_from_json(const nlohmann::json& j) {
  GenerativeSpec spec = GenerativeSpec::calibrated();
  if (!j.is_object()) throw std::invalid_argument("feature: spec must be an object");
  for (const auto& [cat_name, per_feature] : j.items()) {
    auto c = parse_category(cat_name);
    if (!c) throw std::invalid_argument("feature: spec: unknown category '" + cat_name + "'");
    for (const auto& [feat_name, probs] : per_feature.items()) {
      const Feature f = parse_feature(feat_name);
      spec.dist[static_cast<std::size_t>(*c)][fi(f)] = probs.get<std::vector<double>>();
    }
  }
  spec.validate();
  return spec;
}

ObjectSample sample_object(const GenerativeSpec& spec, Rng& rng) {
  ObjectSample s;
  s.category = static_cast<Category>(rng.index(kCategoryCount));
  for (Feature f : kAllFeatures)
    s.values[fi(f)] = static_cast<int>(rng.categorical(spec.of(s.category, f)));
  return s;
}

std::vector<ObjectSample> sample_objects(const GenerativeSpec& spec, std::size_t n, Rng& rng) {
  std::vector<ObjectSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_object(spec, rng));
  return out;
}

double bayes_oracle(const GenerativeSpec& spec, const FeatureSet& features) {
  if (features.empty()) throw std::invalid_argument("bayes_oracle: empty feature set");
  std::vector<int> digits(features.size(), 0);
  double total = 0.0;
  while (true) {
    double best = 0.0;
    for (int c = 0; c < kCategoryCount; ++c) {
      double joint = 1.0 / kCategoryCount;
      for (std::size_t k = 0; k < features.size(); ++k)
        joint *= spec.of(static_cast<Category>(c), features[k])[static_cast<std::size_t>(digits[k])];
      best = std::max(best, joint);
    }
    total += best;
    std::size_t pos = features.size();
    while (pos > 0 && digits[pos - 1] == alphabet_size(features[pos - 1]) - 1) digits[--pos] = 0;
    if (pos == 0) break;
    ++digits[pos - 1];
  }
  return total;
}

FrequencyClassifier::FrequencyClassifier(FeatureSet features) : features_(make_set(std::move(features))) {
  for (Feature f : features_) cells_ *= static_cast<std::size_t>(alphabet_size(f));
  counts_.assign(cells_ * kCategoryCount, 0);
}

std::size_t FrequencyClassifier::cell(const ObjectSample& s) const {
  std::size_t idx = 0;
  for (Feature f : features_)
    idx = idx * static_cast<std::size_t>(alphabet_size(f)) + static_cast<std::size_t>(s.value(f));
  return idx;
}

void FrequencyClassifier::fit(std::span<const ObjectSample> train) {
  std::fill(counts_.begin(), counts_.end(), 0);
  totals_.fill(0);
  for (const auto& s : train) {
    const auto c = static_cast<std::size_t>(s.category);
    ++counts_[c * cells_ + cell(s)];
    ++totals_[c];
  }
}

Category FrequencyClassifier::predict(const ObjectSample& sample) const {
  const std::size_t k = cell(sample);
  int best = 0;
  double best_score = -1.0;
  for (int c = 0; c < kCategoryCount; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    const double score = (counts_[cc * cells_ + k] + 1.0) / (totals_[cc] + static_cast<double>(cells_));
    if (score > best_score) {  // strict: ties keep the earlier category
      best_score = score;
      best = c;
    }
  }
  return static_cast<Category>(best);
}

double FrequencyClassifier::accuracy(std::span<const ObjectSample> test) const {
  if (test.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& s : test) ok += predict(s) == s.category ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(test.size());
}

double FrequencyClassifier::accuracy(std::span<const ObjectSample> samples,
                                     std::span<const std::size_t> idx) const {
  if (idx.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i : idx) ok += predict(samples[i]) == samples[i].category ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(idx.size());
}

double train_and_evaluate(const FeatureSet& features, int train_n, int test_n,
                          const GenerativeSpec& spec, Rng& rng) {
  if (train_n < 1 || test_n < 1) throw std::invalid_argument("train_and_evaluate: empty sample");
  const auto train = sample_objects(spec, static_cast<std::size_t>(train_n), rng);
  const auto test = sample_objects(spec, static_cast<std::size_t>(test_n), rng);
  FrequencyClassifier clf(features);
  clf.fit(train);
  return clf.accuracy(test);
}

Config config_from_json(const nlohmann::json& params) {
  Config c;
  nlohmann::json spec_json;
  core::ParamReader(params, "feature")
      .read("delta", c.delta)
      .read("n_e", c.n_e)
      .read("insufficiency_threshold", c.insufficiency_threshold)
      .read("step_budget", c.step_budget)
      .read("train_n", c.train_n)
      .read("test_n", c.test_n)
      .read("validation_n", c.validation_n)
      .read("spec", spec_json)
      .finish();
  if (!spec_json.is_null()) c.spec = spec_from_json(spec_json);
  if (c.n_e < 1) throw std::invalid_argument("feature: n_e must be >= 1");
  if (c.step_budget < 1) throw std::invalid_argument("feature: step_budget must be >= 1");
  if (c.train_n < 1 || c.test_n < 1 || c.validation_n < 1)
    throw std::invalid_argument("feature: sample counts must be >= 1");
  return c;
}

namespace {

// Holds the round's training data; the classifier for the current feature
// set is refit whenever the loop accepts a feature.
class FeatureEnv : public core::Environment {
 public:
  FeatureEnv(const Config& config, const std::vector<ObjectSample>& train)
      : config_(config), train_(train) {}

  core::Observation observe(const core::LoopState& state, Rng& rng) override {
    const auto validation = sample_objects(config_.spec, static_cast<std::size_t>(config_.validation_n), rng);
    FrequencyClassifier clf(features_of(state.objects));
    clf.fit(train_);
    core::Observation obs;
    obs.kind = "validation";
    obs.values = {clf.accuracy(validation)};
    return obs;
  }

 private:
  const Config& config_;
  const std::vector<ObjectSample>& train_;
};

double accuracy_on(const FeatureSet& features, const std::vector<ObjectSample>& train,
                   const std::vector<ObjectSample>& samples) {
  FrequencyClassifier clf(features);
  clf.fit(train);
  return clf.accuracy(samples);
}

std::vector<ObjectSample> items_from(const core::EvidenceBatch& batch, const std::string& source) {
  std::vector<ObjectSample> out;
  for (const auto& item : batch.items())
    if (item.source == source) out.push_back(decode(item.payload));
  return out;
}

std::vector<Feature> open_candidates(const core::LearningObjectSet& objects,
                                     const core::ThinkingStrategy& phi) {
  std::vector<Feature> out;
  for (Feature f : kCandidates) {
    const std::string name(feature_name(f));
    if (objects.features.contains(name)) continue;
    if (phi.get("rejected:" + name) > 0.0) continue;
    out.push_back(f);
  }
  return out;
}

core::OperatorBundle proposed_operators(const Config& config, const std::vector<ObjectSample>& train) {
  core::OperatorBundle ops;
  ops.evaluate = [&config](const core::Observation& obs, const core::LearningObjectSet&,
                           const core::KnowledgeState&) {
    core::SufficiencyAssessment q;
    q.diagnostics["validation_accuracy"] = obs.values.at(0);
    q.sufficient = obs.values.at(0) >= config.insufficiency_threshold;
    if (!q.sufficient) q.deficit = core::UpdateTarget{core::UpdateComponent::InputFeatures, ""};
    return q;
  };
  ops.think = [&config](const core::SufficiencyAssessment& q, const core::Observation&,
                        const core::LearningObjectSet& objects, const core::KnowledgeState&,
                        const core::ThinkingStrategy& phi) {
    core::LearningPlan plan;
    plan.target = *q.deficit;
    const auto n = static_cast<std::size_t>(config.n_e);
    for (Feature f : open_candidates(objects, phi))
      plan.evidence_requests.push_back({kRankPrefix + std::string(feature_name(f)), n,
                                        static_cast<double>(n)});
    if (!plan.evidence_requests.empty())
      plan.evidence_requests.push_back({kVerifySource, n, static_cast<double>(n)});
    plan.verification_protocol["delta"] = config.delta;
    return plan;
  };
  ops.collect = [&config](const core::LearningPlan& plan, const core::Observation&,
                          const core::KnowledgeState&, Rng& rng) {
    core::EvidenceBatch batch;
    for (const auto& req : plan.evidence_requests)
      for (std::size_t i = 0; i < req.quantity; ++i)
        batch.add({encode(sample_object(config.spec, rng)), req.source,
                   core::EvidenceOrigin::ActiveInteraction, 1.0});
    return batch;
  };
  ops.construct_data = [](const core::EvidenceBatch& batch, const core::LearningPlan& plan,
                          const core::KnowledgeState&) {
    core::LearningMaterials d;
    d.target = plan.target;
    for (std::size_t i = 0; i < batch.size(); ++i)
      (batch.items()[i].source == kVerifySource ? d.validation : d.training).push_back(i);
    return d;
  };
  ops.learn = [&train](const core::LearningMaterials&, const core::EvidenceBatch& batch,
                       const core::LearningObjectSet& objects) {
    const FeatureSet current = features_of(objects);
    std::optional<Feature> best;
    double best_gain = 0.0;
    for (Feature f : kCandidates) {
      const auto fresh = items_from(batch, kRankPrefix + std::string(feature_name(f)));
      if (fresh.empty()) continue;
      const double gain = accuracy_on(with(current, f), train, fresh) - accuracy_on(current, train, fresh);
      if (!best || gain > best_gain) {
        best = f;
        best_gain = gain;
      }
    }
    if (!best)
      throw core::LoopError(core::LoopErrorCode::OperatorFailure, "feature learn: nothing to rank");
    const FeatureSet next = with(current, *best);
    core::LearningResult L;
    L.candidate.kind = core::UpdateKind::AddFeature;
    L.candidate.name = std::string(feature_name(*best));
    core::ModelHandle model = objects.model;
    model.inputs = names_of(next);
    model.revision += 1;
    model.parameters["train_n"] = static_cast<double>(train.size());
    L.candidate.model = model;
    L.fit_metrics["ranking_gain"] = best_gain;
    return L;
  };
  ops.verify = [&config, &train](const core::LearningResult& L, const core::LearningMaterials&,
                                 const core::EvidenceBatch& batch, const core::KnowledgeState&) {
    const auto held_out = items_from(batch, kVerifySource);
    if (held_out.empty()) return core::Verdict::insufficient();
    FeatureSet before;
    for (const auto& name : L.candidate.model->inputs)
      if (name != L.candidate.name) before.push_back(parse_feature(name));
    before = make_set(before);
    const FeatureSet after = with(before, parse_feature(L.candidate.name));
    const double improvement = accuracy_on(after, train, held_out) - accuracy_on(before, train, held_out);
    // Slack so that an improvement of exactly delta survives rounding.
    return improvement >= config.delta - 1e-12 ? core::Verdict::pass(improvement)
                                               : core::Verdict::fail(improvement);
  };
  ops.improve_thinking = [](const core::ThinkingStrategy& phi, const core::KnowledgeState&,
                            const core::LearningResult& L, const core::Verdict& v) {
    core::ThinkingStrategy next = phi;
    next.parameters["cycles"] += 1.0;
    if (!v.accepted) next.parameters["rejected:" + L.candidate.name] = 1.0;
    return next;
  };
  return ops;
}

core::LoopState initial_state() {
  core::LoopState s;
  s.objects.features = names_of(kInitialFeatures);
  for (int c = 0; c < kCategoryCount; ++c)
    s.objects.outputs.emplace(category_name(static_cast<Category>(c)));
  s.objects.model.id = kModelId;
  s.objects.model.inputs = s.objects.features;
  s.objects.model.outputs = s.objects.outputs;
  s.objects.relations.recognition =
      core::RecognitionRelation{s.objects.features, kModelId, 0, s.objects.outputs};
  return s;
}

}  // namespace

core::StepRecord run_proposed_first_step(const Config& config, Rng& rng) {
  const auto train = sample_objects(config.spec, static_cast<std::size_t>(config.train_n), rng);
  FeatureEnv env(config, train);
  const core::OperatorBundle ops = proposed_operators(config, train);
  return core::run_step(initial_state(), env, ops, rng);
}

RoundResult run_feature_method(Method method, const Config& config, Rng& rng) {
  RoundResult out;
  const auto train = sample_objects(config.spec, static_cast<std::size_t>(config.train_n), rng);
  const auto test = sample_objects(config.spec, static_cast<std::size_t>(config.test_n), rng);
  FeatureSet features = kInitialFeatures;
  std::vector<Feature> accepted;

  switch (method) {
    case Method::FixedFeature:
      break;
    case Method::RandomExpansion: {
      std::vector<Feature> unused(kCandidates.begin(), kCandidates.end());
      const auto k = rng.uniform_int(1, static_cast<std::int64_t>(unused.size()));
      for (std::int64_t i = 0; i < k; ++i) {
        const std::size_t pick = rng.index(unused.size());
        accepted.push_back(unused[pick]);
        unused.erase(unused.begin() + static_cast<std::ptrdiff_t>(pick));
        out.evidence_cost += config.n_e;
        ++out.adaptation_steps;
      }
      features.insert(features.end(), accepted.begin(), accepted.end());
      features = make_set(features);
      break;
    }
    case Method::Proposed: {
      FeatureEnv env(config, train);
      const core::OperatorBundle ops = proposed_operators(config, train);
      core::LoopState state = initial_state();
      bool settled = false;
      while (out.adaptation_steps < config.step_budget) {
        if (open_candidates(state.objects, state.strategy).empty()) break;
        core::StepRecord rec = core::run_step(state, env, ops, rng);
        state = std::move(rec.state);
        if (rec.trace.assessment.sufficient) {
          settled = true;
          break;
        }
        ++out.adaptation_steps;
        out.evidence_cost += rec.trace.evidence->total_cost();
        if (rec.applied) accepted.push_back(parse_feature(rec.trace.result->candidate.name));
      }
      out.budget_exhausted = !settled && out.adaptation_steps >= config.step_budget;
      features = features_of(state.objects);
      break;
    }
  }

  for (Feature f : accepted) {
    if (f == Feature::Color) {
      out.discovered_useful = true;
    } else {
      ++out.false_acceptances;
    }
  }
  out.final_features = features;
  out.final_accuracy = accuracy_on(features, train, test);
  return out;
}

}  // namespace uptodate::feature
