#pragma once

// Input-feature discovery over four object categories.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uptodate/core/types.hpp"
#include "uptodate/rng.hpp"

namespace uptodate::feature {

enum class Category { Banana, Apple, Cup, Bottle };
inline constexpr int kCategoryCount = 4;

enum class Feature { Shape, Size, Color, Texture, Position, Weight };
inline constexpr int kFeatureCount = 6;
inline constexpr std::array<Feature, kFeatureCount> kAllFeatures = {
    Feature::Shape, Feature::Size, Feature::Color, Feature::Texture, Feature::Position, Feature::Weight};
/// Candidates in ranking tie-break order.
inline constexpr std::array<Feature, 4> kCandidates = {Feature::Color, Feature::Texture,
                                                       Feature::Position, Feature::Weight};

std::string_view category_name(Category c);
std::string_view feature_name(Feature f);
Feature parse_feature(std::string_view name);
std::optional<Category> parse_category(std::string_view name);
int alphabet_size(Feature f);
std::string_view value_name(Feature f, int value);

/// Sorted, duplicate-free feature subset.
using FeatureSet = std::vector<Feature>;
FeatureSet make_set(std::vector<Feature> features);
FeatureSet parse_feature_list(std::string_view csv);
inline const FeatureSet kInitialFeatures = {Feature::Shape, Feature::Size};

struct GenerativeSpec {
  // dist[category][feature][value]
  std::array<std::array<std::vector<double>, kFeatureCount>, kCategoryCount> dist;

  /// The shipped default spec.
  static GenerativeSpec calibrated();
  /// Throws std::invalid_argument if a distribution has the wrong size or does not sum to 1.
  void validate() const;

  const std::vector<double>& of(Category c, Feature f) const {
    return dist[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)];
  }
};

/// Overrides keyed by category then feature name, e.g. {"banana": {"color": [..]}}.
/// Anything not mentioned keeps the calibrated value.
GenerativeSpec spec_from_json(const nlohmann::json& j);

struct ObjectSample {
  Category category = Category::Banana;
  std::array<int, kFeatureCount> values{};

  int value(Feature f) const { return values[static_cast<std::size_t>(f)]; }
  bool operator==(const ObjectSample&) const = default;
};

ObjectSample sample_object(const GenerativeSpec& spec, Rng& rng);
std::vector<ObjectSample> sample_objects(const GenerativeSpec& spec, std::size_t n, Rng& rng);

/// Exact Bayes-optimal accuracy under a uniform category prior, by enumeration
/// of every value tuple of `features`.
double bayes_oracle(const GenerativeSpec& spec, const FeatureSet& features);

/// Add-one smoothed joint-frequency table over the active features' value tuples.
class FrequencyClassifier {
 public:
  explicit FrequencyClassifier(FeatureSet features);

  void fit(std::span<const ObjectSample> train);
  Category predict(const ObjectSample& sample) const;
  double accuracy(std::span<const ObjectSample> test) const;
  double accuracy(std::span<const ObjectSample> samples, std::span<const std::size_t> idx) const;

  const FeatureSet& features() const { return features_; }

 private:
  std::size_t cell(const ObjectSample& s) const;

  FeatureSet features_;
  std::size_t cells_ = 1;
  std::vector<int> counts_;  // [category * cells_ + cell]
  std::array<int, kCategoryCount> totals_{};
};

double train_and_evaluate(const FeatureSet& features, int train_n, int test_n,
                          const GenerativeSpec& spec, Rng& rng);

enum class Method { FixedFeature, RandomExpansion, Proposed };

struct Config {
  double delta = 0.05;
  int n_e = 20;
  double insufficiency_threshold = 0.60;
  int step_budget = 4;
  int train_n = 500;
  int test_n = 2000;
  int validation_n = 200;
  GenerativeSpec spec = GenerativeSpec::calibrated();
};

Config config_from_json(const nlohmann::json& params);

struct RoundResult {
  double final_accuracy = 0.0;
  bool discovered_useful = false;
  int false_acceptances = 0;
  double evidence_cost = 0.0;
  int adaptation_steps = 0;
  bool budget_exhausted = false;
  FeatureSet final_features;
};

RoundResult run_feature_method(Method method, const Config& config, Rng& rng);

/// One loop step of the Proposed agent from the initial {Shape, Size} state,
/// with a freshly drawn training set. Used to inspect a single update.
core::StepRecord run_proposed_first_step(const Config& config, Rng& rng);

}  // namespace uptodate::feature
