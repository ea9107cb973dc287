#pragma once

// Output-category and model expansion: three known categories, an emerging
// fourth one, a nearest-centroid open-set detector.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uptodate/core/types.hpp"
#include "uptodate/rng.hpp"

namespace uptodate::openset {

enum class TrueCategory { Apple, Banana, Cup, Orange };
inline constexpr int kCategoryCount = 4;
inline constexpr int kKnownCount = 3;
inline constexpr int kDim = 4;  // hue, roundness, size, texture

using Vec = std::array<double, kDim>;

std::string category_name(TrueCategory c);
double distance(const Vec& a, const Vec& b);
Vec mean_of(const std::vector<Vec>& points);

struct Sample {
  TrueCategory truth = TrueCategory::Apple;
  Vec x{};
};

struct Spec {
  std::array<Vec, kCategoryCount> means{};
  double sigma = 0.05;

  static Spec calibrated();
  const Vec& mean(TrueCategory c) const { return means[static_cast<std::size_t>(c)]; }
};

/// Isotropic normal around the category mean; each component outside [0, 1] is redrawn.
Sample sample_category(const Spec& spec, TrueCategory c, Rng& rng);
Vec uniform_point(Rng& rng);

struct LabeledPoint {
  std::string label;
  Vec x{};
};

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DuplicateCategory : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::string kUnknown = "unknown";

struct CentroidModel {
  std::vector<std::string> labels;
  std::vector<Vec> centroids;
  std::vector<std::vector<Vec>> replay;  // per label, capacity-bounded
  double tau = 0.0;

  /// Index of the nearest centroid (first on ties).
  std::size_t nearest(const Vec& x) const;
  bool is_unknown(const Vec& x) const { return distance(x, centroids[nearest(x)]) > tau; }
  /// Nearest label, or kUnknown when farther than tau from every centroid.
  const std::string& classify(const Vec& x) const;
  /// Nearest label with no rejection.
  const std::string& classify_closed(const Vec& x) const { return labels[nearest(x)]; }
};

/// Centroids are per-label means; tau is the nearest-rank q-quantile of the
/// training distances to the own centroid. Labels keep first-appearance order.
CentroidModel fit_centroid_model(const std::vector<LabeledPoint>& train, double q,
                                 std::size_t replay_capacity, std::size_t min_per_label = 50);

struct UnknownBuffer {
  std::vector<Vec> samples;
  std::vector<std::uint64_t> timestamps;

  void add(const Vec& x, std::uint64_t t) {
    samples.push_back(x);
    timestamps.push_back(t);
  }
  std::size_t count() const { return samples.size(); }
  Vec centroid() const { return mean_of(samples); }
  /// Mean distance of the members to the buffer centroid.
  double cohesion() const;
  void clear() {
    samples.clear();
    timestamps.clear();
  }
};

struct VerifyThresholds {
  std::size_t m_min = 15;
  double cohesion = 0.2;
  double separation = 0.3;
};

/// Accepted iff enough samples, tight enough, and far enough from every known centroid.
core::Verdict verify_new_category(const UnknownBuffer& buffer, const CentroidModel& model,
                                  const VerifyThresholds& thresholds);

/// Adds a centroid at the buffer mean. Old centroids are pulled toward their
/// replay-buffer means, by at most eps_c per axis. tau is unchanged.
CentroidModel expand_model(const CentroidModel& model, const std::string& new_category,
                           const UnknownBuffer& buffer, double eps_c = 0.02,
                           std::size_t replay_capacity = 50);

enum class Method { ClosedSet, OpenSetOnly, RandomExpansion, Proposed };

struct Config {
  int train_per_category = 100;
  double quantile = 0.99;
  int replay_capacity = 50;
  VerifyThresholds thresholds;
  double eps_c = 0.02;
  double p_rand = 0.5;
  double noise_batch_fraction = 0.1;
  int random_windows = 7;
  int stream_size = 600;
  double orange_fraction = 0.3;
  int forgetting_holdout = 1000;
  int mixed_holdout_per_category = 500;
  double model_success_accuracy = 0.95;
  Spec spec = Spec::calibrated();
};

/// Default thresholds are 2 and 3 sigma-equivalents in the 4-D space: k * sigma * sqrt(4).
Config config_from_json(const nlohmann::json& params);

struct RoundResult {
  double unknown_detection_rate = 0.0;
  bool new_category_formed_correctly = false;
  int false_categories = 0;
  bool model_update_success = false;
  double forgetting = 0.0;
  int categories_created = 0;
  double mixed_accuracy = 0.0;
};

RoundResult run_openset_method(Method method, const Config& config, Rng& rng);

}  // namespace uptodate::openset
