#pragma once

// Washing-machine simulator and action-routine reconstruction.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uptodate/core/types.hpp"
#include "uptodate/rng.hpp"

namespace uptodate::routine {

enum class Mode { Standard, Heavy, Quick, Rinse, Spin };
inline constexpr int kModeCount = 5;
inline constexpr Mode kTargetMode = Mode::Quick;

enum class Action { PowerOn, PressProgram, ObserveMode, Judge, Confirm };
inline constexpr int kActionCount = 5;
inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::PowerOn, Action::PressProgram, Action::ObserveMode, Action::Judge, Action::Confirm};

/// Routines longer than this are refused by the simulator.
inline constexpr std::size_t kRoutineCap = 20;

using Routine = std::vector<Action>;

std::string_view action_name(Action a);
std::string_view mode_name(Mode m);
Action parse_action(std::string_view name);

struct MachineState {
  bool power = false;
  int mode_index = 0;
  std::optional<int> confirmed;

  bool operator==(const MachineState&) const = default;
};

struct MachineObservation {
  enum class Kind { None, Unpowered, Mode, Judgement, Confirmed };
  Kind kind = Kind::None;
  int mode_index = 0;
  bool at_target = false;

  bool operator==(const MachineObservation&) const = default;
};

std::pair<MachineState, MachineObservation> step_machine(const MachineState& state, Action action);

struct ExecutionTrace {
  std::vector<std::pair<Action, MachineObservation>> steps;
  bool success = false;

  std::size_t length() const { return steps.size(); }
  Routine actions() const;

  bool operator==(const ExecutionTrace&) const = default;
};

/// Runs `routine` from the powered-off state. Execution stops at the first
/// powered Confirm; success iff Quick was confirmed.
ExecutionTrace execute_routine(const Routine& routine);

/// PowerOn then four (Press, Observe, Judge) triples: written for a machine
/// where Quick was the fifth mode. Fails on the current machine.
Routine legacy_routine();

/// Reactive exploration: power on, then observe/judge and press until the
/// judgement is positive, then confirm.
Routine reactive_exploration(int max_presses = kModeCount);

struct NoSolution : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoSuccessfulTrace : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shortest successful routine of length <= max_len by exhaustive enumeration;
/// among equal lengths the first in lexicographic action order.
Routine minimal_routine_oracle(int max_len);

/// Greedy deletion of ObserveMode/Judge from the shortest successful trace,
/// followed by k_verify re-executions of the candidate.
std::pair<Routine, core::Verdict> compress_routine(const std::vector<ExecutionTrace>& traces,
                                                   int k_verify);

enum class Method { FixedRoutine, RandomSearch, RLLike, Proposed };

struct Config {
  int trial_budget = 10;
  int random_min_len = 3;
  int random_max_len = 13;
  double rl_epsilon = 0.3;
  int exploration_episodes = 4;
  int k_verify = 5;
  int loop_horizon = 10;
};

/// Strict parse; unknown keys raise std::invalid_argument naming the key.
Config config_from_json(const nlohmann::json& params);

struct RoundResult {
  double success = 0.0;  // per-trial success fraction for RandomSearch, 0/1 otherwise
  double final_length = 0.0;
  double adaptation_time = 0.0;
  double compression_ratio = 0.0;
  double failed_trial_rate = 0.0;
  bool solved = false;  // whether any successful routine was found in the round
  Routine final_routine;
};

RoundResult run_routine_method(Method method, const Config& config, Rng& rng);

/// Loop-driven reconstruction used by the Proposed method. Exposed so the
/// episode record can be inspected directly.
core::EpisodeRecord run_proposed_episode(const Config& config, Rng& rng,
                                         int* adaptation_time = nullptr,
                                         int* failed_trials = nullptr);

core::LoopState initial_state();

}  // namespace uptodate::routine
