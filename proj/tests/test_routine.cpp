#include <doctest.h>

#include <deque>
#include <map>
#include <set>

#include "uptodate/routine/routine.hpp"

using namespace uptodate;
using namespace uptodate::routine;

namespace {

// Independent model of the device: (power, mode, confirmed) with Quick at index 2.
struct Dev {
  bool on = false;
  int mode = 0;
  int confirmed = -1;
  auto operator<=>(const Dev&) const = default;
};

Dev apply(Dev d, int action) {
  if (d.confirmed >= 0) return d;
  if (action == 0) return Dev{true, 0, -1};
  if (!d.on) return d;
  if (action == 1) d.mode = (d.mode + 1) % 5;
  if (action == 4) d.confirmed = d.mode;
  return d;
}

// Breadth-first search over device states for the fewest actions reaching confirmed == Quick.
int bfs_shortest() {
  std::map<Dev, int> dist{{Dev{}, 0}};
  std::deque<Dev> q{Dev{}};
  while (!q.empty()) {
    const Dev d = q.front();
    q.pop_front();
    if (d.confirmed == 2) return dist[d];
    for (int a = 0; a < 5; ++a) {
      const Dev n = apply(d, a);
      if (!dist.contains(n)) {
        dist[n] = dist[d] + 1;
        q.push_back(n);
      }
    }
  }
  return -1;
}

Routine R(std::initializer_list<Action> a) { return Routine(a); }

}  // namespace

TEST_SUITE("routine") {
  TEST_CASE("machine transitions") {
    auto [s, o] = step_machine(MachineState{}, Action::ObserveMode);
    CHECK(s == MachineState{});
    CHECK(o.kind == MachineObservation::Kind::Unpowered);

    MachineState m;
    for (Action a : {Action::PowerOn, Action::PressProgram, Action::PressProgram}) m = step_machine(m, a).first;
    const auto obs = step_machine(m, Action::ObserveMode).second;
    CHECK(obs.kind == MachineObservation::Kind::Mode);
    CHECK(static_cast<Mode>(obs.mode_index) == Mode::Quick);
    CHECK(step_machine(m, Action::Judge).second.at_target);

    m = step_machine(MachineState{}, Action::PowerOn).first;
    for (int i = 0; i < 5; ++i) m = step_machine(m, Action::PressProgram).first;
    CHECK(m.mode_index == 0);
  }

  TEST_CASE("step_machine agrees with an independent device model on every state and action") {
    for (int power = 0; power < 2; ++power)
      for (int mode = 0; mode < 5; ++mode)
        for (int a = 0; a < kActionCount; ++a) {
          const MachineState s{power == 1, mode, std::nullopt};
          const MachineState n = step_machine(s, kAllActions[static_cast<std::size_t>(a)]).first;
          const Dev d = apply(Dev{power == 1, mode, -1}, a);
          CHECK(n.power == d.on);
          CHECK(n.mode_index == d.mode);
          CHECK(n.confirmed.value_or(-1) == d.confirmed);
        }
  }

  TEST_CASE("ObserveMode and Judge never change the machine") {
    for (int power = 0; power < 2; ++power)
      for (int mode = 0; mode < 5; ++mode) {
        const MachineState s{power == 1, mode, std::nullopt};
        CHECK(step_machine(s, Action::ObserveMode).first == s);
        CHECK(step_machine(s, Action::Judge).first == s);
      }
  }

  TEST_CASE("execute_routine") {
    const ExecutionTrace legacy = execute_routine(legacy_routine());
    CHECK(legacy_routine().size() == 13);
    CHECK_FALSE(legacy.success);
    CHECK(legacy.length() == 13);

    const ExecutionTrace good =
        execute_routine(R({Action::PowerOn, Action::PressProgram, Action::PressProgram, Action::Confirm}));
    CHECK(good.success);
    CHECK(good.length() == 4);

    CHECK_FALSE(execute_routine(R({Action::PowerOn, Action::Confirm})).success);
    // Execution stops at the first powered Confirm.
    const ExecutionTrace stop = execute_routine(
        R({Action::PowerOn, Action::Confirm, Action::PressProgram, Action::PressProgram, Action::Confirm}));
    CHECK(stop.length() == 2);
    CHECK_FALSE(stop.success);
  }

  TEST_CASE("brute-force oracle") {
    CHECK_THROWS_AS(minimal_routine_oracle(3), NoSolution);
    const Routine expect = R({Action::PowerOn, Action::PressProgram, Action::PressProgram, Action::Confirm});
    CHECK(minimal_routine_oracle(4) == expect);
    CHECK(minimal_routine_oracle(8) == expect);
    CHECK(static_cast<int>(minimal_routine_oracle(8).size()) == bfs_shortest());
    CHECK_THROWS_AS(minimal_routine_oracle(9), std::invalid_argument);
  }

  TEST_CASE("no sequence of length <= 3 succeeds (all 155 of them)") {
    int count = 0;
    for (int len = 1; len <= 3; ++len) {
      std::vector<int> idx(static_cast<std::size_t>(len), 0);
      while (true) {
        Routine r;
        for (int i : idx) r.push_back(kAllActions[static_cast<std::size_t>(i)]);
        CHECK_FALSE(execute_routine(r).success);
        ++count;
        int p = len - 1;
        while (p >= 0 && ++idx[static_cast<std::size_t>(p)] == kActionCount) idx[static_cast<std::size_t>(p--)] = 0;
        if (p < 0) break;
      }
    }
    CHECK(count == 155);
  }

  TEST_CASE("compression of the reactive trace reaches the oracle routine") {
    const ExecutionTrace reactive = execute_routine(reactive_exploration());
    REQUIRE(reactive.success);
    CHECK(reactive.length() == 10);
    const auto [candidate, verdict] = compress_routine({reactive}, 5);
    CHECK(verdict.accepted);
    CHECK(candidate == minimal_routine_oracle(8));

    const auto [same, v2] = compress_routine({execute_routine(candidate)}, 5);
    CHECK(same == candidate);
    CHECK(v2.accepted);

    CHECK_THROWS_AS(compress_routine({}, 5), NoSuccessfulTrace);
    CHECK_THROWS_AS(compress_routine({execute_routine(legacy_routine())}, 5), NoSuccessfulTrace);
  }

  TEST_CASE("compression never lengthens") {
    Rng rng(21);
    int checked = 0;
    while (checked < 200) {
      Routine r;
      const auto len = rng.uniform_int(4, 14);
      for (std::int64_t i = 0; i < len; ++i) r.push_back(kAllActions[rng.index(kActionCount)]);
      const ExecutionTrace t = execute_routine(r);
      if (!t.success) continue;
      const auto [c, v] = compress_routine({t}, 5);
      CHECK(c.size() <= t.length());
      CHECK(execute_routine(c).success);
      ++checked;
    }
  }

  TEST_CASE("per-method rows") {
    const Config cfg;
    Rng rng(7);
    const RoundResult fixed = run_routine_method(Method::FixedRoutine, cfg, rng);
    CHECK(fixed.success == 0.0);
    CHECK(fixed.final_length == 13.0);
    CHECK(fixed.adaptation_time == 0.0);
    CHECK(fixed.compression_ratio == 0.0);
    CHECK(fixed.failed_trial_rate == 0.0);

    const RoundResult prop = run_routine_method(Method::Proposed, cfg, rng);
    CHECK(prop.success == 1.0);
    CHECK(prop.final_length == 4.0);
    CHECK(prop.adaptation_time == 5.0);
    CHECK(prop.compression_ratio == doctest::Approx(1.0 - 4.0 / 13.0));
    CHECK(prop.failed_trial_rate == 0.0);

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(seed);
      const RoundResult rl = run_routine_method(Method::RLLike, cfg, r);
      CHECK(rl.success == 1.0);
      CHECK(rl.final_length == 4.0);
      CHECK(rl.adaptation_time >= 2.0);  // n = 1 fails, n = 2 is the first possible success
      // Only the final trial is a clean success; distracted successes are retried, not failures.
      CHECK(rl.failed_trial_rate <= (rl.adaptation_time - 1.0) / rl.adaptation_time + 1e-12);
      Rng r2(seed);
      const RoundResult rs = run_routine_method(Method::RandomSearch, cfg, r2);
      CHECK(rs.adaptation_time == 10.0);
      CHECK(rs.success + rs.failed_trial_rate == doctest::Approx(1.0));
    }
  }

  TEST_CASE("config parsing rejects unknown keys") {
    CHECK_THROWS_AS(config_from_json({{"trial_budgt", 3}}), std::invalid_argument);
    CHECK(config_from_json({{"trial_budget", 3}}).trial_budget == 3);
    CHECK(config_from_json(nullptr).k_verify == 5);
  }
}
