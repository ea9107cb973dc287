#include <doctest.h>

#include <cmath>

#include "uptodate/openset/openset.hpp"

using namespace uptodate;
using namespace uptodate::openset;

namespace {

std::vector<LabeledPoint> training_set(const Spec& spec, int per, Rng& rng) {
  std::vector<LabeledPoint> out;
  for (int i = 0; i < per; ++i)
    for (auto c : {TrueCategory::Apple, TrueCategory::Banana, TrueCategory::Cup})
      out.push_back({category_name(c), sample_category(spec, c, rng).x});
  return out;
}

UnknownBuffer buffer_of(const Spec& spec, TrueCategory c, int n, Rng& rng) {
  UnknownBuffer b;
  for (int i = 0; i < n; ++i) b.add(sample_category(spec, c, rng).x, static_cast<std::uint64_t>(i));
  return b;
}

}  // namespace

TEST_SUITE("openset") {
  TEST_CASE("distance and mean") {
    CHECK(distance({0, 0, 0, 0}, {1, 1, 1, 1}) == doctest::Approx(2.0));
    const Vec m = mean_of({{0, 0, 0, 0}, {1, 2, 3, 4}});
    CHECK(m == Vec{0.5, 1.0, 1.5, 2.0});
  }

  TEST_CASE("sampling stays inside the unit cube with the right spread") {
    const Spec spec = Spec::calibrated();
    Rng rng(4);
    double sum = 0.0;
    double sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const Sample s = sample_category(spec, TrueCategory::Cup, rng);
      for (double v : s.x) CHECK((v >= 0.0 && v <= 1.0));
      sum += s.x[0];
      sq += s.x[0] * s.x[0];
    }
    const double mean = sum / n;
    CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::sqrt(sq / n - mean * mean) == doctest::Approx(0.05).epsilon(0.05));
  }

  TEST_CASE("tau is the nearest-rank quantile of own-centroid distances") {
    // Two labels, 50 points each on a line: distances 0..49 * 0.01 from centroids we control.
    std::vector<LabeledPoint> train;
    for (int i = 0; i < 50; ++i) {
      const double d = 0.01 * i;
      train.push_back({"a", {d, 0, 0, 0}});
      train.push_back({"a", {-d, 0, 0, 0}});
    }
    const CentroidModel m = fit_centroid_model(train, 0.9, 10);
    CHECK(m.labels == std::vector<std::string>{"a"});
    CHECK(m.centroids[0][0] == doctest::Approx(0.0));
    // 100 distances, two copies each of 0.00..0.49. Rank ceil(90) = 90th -> value 0.44.
    CHECK(m.tau == doctest::Approx(0.44));
    CHECK(m.replay[0].size() == 10);
    CHECK_THROWS_AS(fit_centroid_model({{"a", {}}}, 0.99, 10), InsufficientData);
  }

  TEST_CASE("classification and unknown rejection") {
    CentroidModel m;
    m.labels = {"a", "b"};
    m.centroids = {{0, 0, 0, 0}, {1, 0, 0, 0}};
    m.replay = {{}, {}};
    m.tau = 0.3;
    CHECK(m.classify({0.1, 0, 0, 0}) == "a");
    CHECK(m.classify({0.8, 0, 0, 0}) == "b");
    CHECK(m.classify({0.5, 0, 0, 0}) == kUnknown);
    CHECK(m.classify_closed({0.5, 0, 0, 0}) == "a");  // tie goes to the first
  }

  TEST_CASE("orange samples are nearly all flagged unknown by a calibrated detector") {
    const Spec spec = Spec::calibrated();
    Rng rng(9);
    const CentroidModel m = fit_centroid_model(training_set(spec, 100, rng), 0.99, 50);
    int flagged = 0;
    for (int i = 0; i < 2000; ++i) flagged += m.is_unknown(sample_category(spec, TrueCategory::Orange, rng).x);
    CHECK(flagged / 2000.0 >= 0.99);
    int known_flagged = 0;
    for (int i = 0; i < 3000; ++i)
      known_flagged += m.is_unknown(sample_category(spec, TrueCategory::Banana, rng).x);
    CHECK(known_flagged / 3000.0 < 0.05);
  }

  TEST_CASE("cohesion by hand") {
    UnknownBuffer b;
    b.add({0, 0, 0, 0}, 0);
    b.add({2, 0, 0, 0}, 1);
    CHECK(b.centroid() == Vec{1, 0, 0, 0});
    CHECK(b.cohesion() == doctest::Approx(1.0));
    b.clear();
    CHECK(b.count() == 0);
  }

  TEST_CASE("verification gate") {
    const Spec spec = Spec::calibrated();
    Rng rng(10);
    const CentroidModel m = fit_centroid_model(training_set(spec, 100, rng), 0.99, 50);
    const Config cfg;
    CHECK(cfg.thresholds.cohesion == doctest::Approx(0.2));
    CHECK(cfg.thresholds.separation == doctest::Approx(0.3));

    const UnknownBuffer few = buffer_of(spec, TrueCategory::Orange, 5, rng);
    const auto v0 = verify_new_category(few, m, cfg.thresholds);
    CHECK_FALSE(v0.accepted);
    CHECK(v0.reason == core::VerdictReason::InsufficientEvidence);

    const UnknownBuffer orange = buffer_of(spec, TrueCategory::Orange, 30, rng);
    const auto v1 = verify_new_category(orange, m, cfg.thresholds);
    CHECK(v1.accepted);
    CHECK(v1.score == doctest::Approx(distance(orange.centroid(), m.centroids[0])).epsilon(0.2));

    // Noise: uniform points are not cohesive.
    UnknownBuffer noise;
    for (int i = 0; i < 30; ++i) noise.add(uniform_point(rng), static_cast<std::uint64_t>(i));
    CHECK_FALSE(verify_new_category(noise, m, cfg.thresholds).accepted);

    // A tight cluster on top of a known category is not separated.
    const UnknownBuffer apple = buffer_of(spec, TrueCategory::Apple, 30, rng);
    CHECK_FALSE(verify_new_category(apple, m, cfg.thresholds).accepted);
  }

  TEST_CASE("expansion adds one centroid and moves old ones by at most eps_c per axis") {
    const Spec spec = Spec::calibrated();
    Rng rng(11);
    const CentroidModel m = fit_centroid_model(training_set(spec, 100, rng), 0.99, 50);
    const UnknownBuffer orange = buffer_of(spec, TrueCategory::Orange, 30, rng);
    const CentroidModel n = expand_model(m, "novel_0", orange, 0.02, 50);
    REQUIRE(n.labels.size() == 4);
    CHECK(n.labels.back() == "novel_0");
    CHECK(n.centroids.back() == orange.centroid());
    CHECK(n.tau == m.tau);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < kDim; ++k) CHECK(std::fabs(n.centroids[i][k] - m.centroids[i][k]) <= 0.02 + 1e-15);
    CHECK(n.classify(sample_category(spec, TrueCategory::Orange, rng).x) != kUnknown);
    CHECK_THROWS_AS(expand_model(n, "novel_0", orange), DuplicateCategory);
  }

  TEST_CASE("per-method rows") {
    const Config cfg;
    Rng a(7);
    const RoundResult closed = run_openset_method(Method::ClosedSet, cfg, a);
    CHECK(closed.unknown_detection_rate == 0.0);
    CHECK_FALSE(closed.new_category_formed_correctly);
    CHECK(closed.false_categories == 0);
    CHECK(closed.forgetting == 0.0);

    Rng b(7);
    const RoundResult only = run_openset_method(Method::OpenSetOnly, cfg, b);
    CHECK(only.unknown_detection_rate >= 0.98);
    CHECK(only.categories_created == 0);

    Rng c(7);
    const RoundResult prop = run_openset_method(Method::Proposed, cfg, c);
    CHECK(prop.unknown_detection_rate == only.unknown_detection_rate);
    CHECK(prop.new_category_formed_correctly);
    CHECK(prop.categories_created == 1);
    CHECK(prop.false_categories == 0);
    CHECK(prop.model_update_success);
    CHECK(prop.forgetting >= 0.0);
  }

  TEST_CASE("config parsing") {
    CHECK_THROWS_AS(config_from_json({{"m_minn", 3}}), std::invalid_argument);
    const Config c = config_from_json({{"spec", {{"sigma", 0.1}}}});
    CHECK(c.thresholds.cohesion == doctest::Approx(0.4));
    CHECK(c.thresholds.separation == doctest::Approx(0.6));
    CHECK(config_from_json({{"theta_cohesion", 0.15}}).thresholds.cohesion == 0.15);
    CHECK_THROWS_AS(config_from_json({{"spec", {{"means", {{"pear", {0, 0, 0, 0}}}}}}}), std::invalid_argument);
  }
}
