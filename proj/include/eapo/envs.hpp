#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eapo/mdp.hpp"
#include "eapo/rng.hpp"

namespace eapo {

struct EnvStepOutcome {
  std::vector<double> observation;
  double reward = 0.0;
  TerminalKind terminal_kind = TerminalKind::kNone;
};

struct GridCell {
  int x = 0;
  int y = 0;
  bool operator==(const GridCell&) const = default;
};

// Single-owner mutable state machine. step() on a finished episode throws.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int num_actions() const = 0;
  virtual int observation_size() const = 0;
  virtual int max_steps() const = 0;

  virtual std::vector<double> reset(CounterRng& rng) = 0;
  virtual EnvStepOutcome step(int action) = 0;
  virtual std::vector<double> observe() const = 0;
  virtual bool done() const = 0;
  virtual int step_count() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  // Agent cell for visitation heatmaps; empty for non-grid environments.
  virtual std::optional<GridCell> cell() const { return std::nullopt; }
  virtual int grid_size() const { return 0; }

  // Exact-state protocol for export_tabular. The key encodes the dynamic state
  // without the step counter; restore() sets both and clears the done flag.
  virtual std::uint64_t state_key() const = 0;
  virtual void restore(std::uint64_t key, int step_count) = 0;
  virtual std::vector<std::pair<std::uint64_t, double>> initial_states() const = 0;
  // Environments that already are tabular MDPs return them here.
  virtual const DeterministicTabularMdp* as_tabular() const { return nullptr; }
};

enum class Heading : int { kEast = 0, kSouth = 1, kWest = 2, kNorth = 3 };

inline constexpr double kGoalRewardDecay = 0.9;

// 1 - 0.9 t / T, paid on the step that enters the goal (t counts that step).
double goal_reward(int step_count, int max_steps);

struct GridEmptyOptions {
  int grid_size = 8;
  int max_steps = 256;
  // Turns also advance one cell in the new heading.
  bool modified_turns = true;
};

// Empty room with outer walls; start (1,1) facing east, goal at
// (grid_size-2, grid_size-2). Actions: 0 left, 1 right, 2 forward, 3-6 no-op.
class GridEmptyEnv final : public Environment {
 public:
  static constexpr int kNumActions = 7;

  explicit GridEmptyEnv(GridEmptyOptions options = {});

  std::string name() const override { return "grid_empty"; }
  int num_actions() const override { return kNumActions; }
  int observation_size() const override;
  int max_steps() const override { return options_.max_steps; }

  std::vector<double> reset(CounterRng& rng) override;
  std::vector<double> reset();
  EnvStepOutcome step(int action) override;
  // One-hot (x - 1) ++ one-hot (y - 1) ++ one-hot heading.
  std::vector<double> observe() const override;
  bool done() const override { return done_; }
  int step_count() const override { return t_; }
  std::unique_ptr<Environment> clone() const override;

  std::optional<GridCell> cell() const override { return GridCell{x_, y_}; }
  int grid_size() const override { return options_.grid_size; }

  std::uint64_t state_key() const override;
  void restore(std::uint64_t key, int step_count) override;
  std::vector<std::pair<std::uint64_t, double>> initial_states() const override;

  Heading heading() const { return heading_; }
  GridCell goal() const { return {options_.grid_size - 2, options_.grid_size - 2}; }
  const GridEmptyOptions& options() const { return options_; }
  void place(int x, int y, Heading heading, int step_count = 0);

 private:
  GridEmptyOptions options_;
  int x_ = 1;
  int y_ = 1;
  Heading heading_ = Heading::kEast;
  int t_ = 0;
  bool done_ = false;
};

// Shortest number of steps from the start to the goal, by breadth-first search
// over the environment's own step function.
int optimal_steps(const GridEmptyOptions& options = {});

// Fixed 8x8 two-room layout: wall column x = 3 with a locked door at (3, 3),
// key at (1, 5), start (1, 1) facing east, goal (6, 6). Actions: 0 left,
// 1 right, 2 forward, 3 pickup (on the key cell), 4 drop (no-op), 5 toggle
// (opens the door in front of the agent when holding the key), 6 done (no-op).
class DoorKeyLiteEnv final : public Environment {
 public:
  static constexpr int kNumActions = 7;
  static constexpr int kGridSize = 8;
  static constexpr int kWallX = 3;
  static constexpr GridCell kDoor{3, 3};
  static constexpr GridCell kKey{1, 5};
  static constexpr GridCell kGoal{6, 6};

  explicit DoorKeyLiteEnv(int max_steps = 256);

  std::string name() const override { return "doorkey_lite"; }
  int num_actions() const override { return kNumActions; }
  int observation_size() const override { return 6 + 6 + 4 + 2; }
  int max_steps() const override { return max_steps_; }

  std::vector<double> reset(CounterRng& rng) override;
  std::vector<double> reset();
  EnvStepOutcome step(int action) override;
  std::vector<double> observe() const override;
  bool done() const override { return done_; }
  int step_count() const override { return t_; }
  std::unique_ptr<Environment> clone() const override;

  std::optional<GridCell> cell() const override { return GridCell{x_, y_}; }
  int grid_size() const override { return kGridSize; }

  std::uint64_t state_key() const override;
  void restore(std::uint64_t key, int step_count) override;
  std::vector<std::pair<std::uint64_t, double>> initial_states() const override;

  bool has_key() const { return has_key_; }
  bool door_open() const { return door_open_; }
  Heading heading() const { return heading_; }

 private:
  bool walkable(int x, int y) const;

  int max_steps_;
  int x_ = 1;
  int y_ = 1;
  Heading heading_ = Heading::kEast;
  bool has_key_ = false;
  bool door_open_ = false;
  int t_ = 0;
  bool done_ = false;
};

// Episodic wrapper around a tabular MDP: start state drawn from the initial
// distribution, one-hot state observation, truncation after max_steps.
class TabularEnv final : public Environment {
 public:
  TabularEnv(DeterministicTabularMdp mdp, std::string name, int max_steps = 256);

  std::string name() const override { return name_; }
  int num_actions() const override { return mdp_.num_actions; }
  int observation_size() const override { return mdp_.num_states; }
  int max_steps() const override { return max_steps_; }

  std::vector<double> reset(CounterRng& rng) override;
  EnvStepOutcome step(int action) override;
  std::vector<double> observe() const override;
  bool done() const override { return done_; }
  int step_count() const override { return t_; }
  std::unique_ptr<Environment> clone() const override;

  std::uint64_t state_key() const override { return static_cast<std::uint64_t>(state_); }
  void restore(std::uint64_t key, int step_count) override;
  std::vector<std::pair<std::uint64_t, double>> initial_states() const override;
  const DeterministicTabularMdp* as_tabular() const override { return &mdp_; }

  int state() const { return state_; }

 private:
  DeterministicTabularMdp mdp_;
  std::string name_;
  int max_steps_;
  int state_ = 0;
  int t_ = 0;
  bool done_ = false;
};

// States 0..n-1 on a line; action 0 moves right, the others stay. Entering
// n-1 pays 1 and terminates. Throws Error{kBadSize} unless n >= 2, k >= 2.
DeterministicTabularMdp chain_mdp(int n, int k);

// Reproducible random MDP: one stream (seed, 0, kMdpGen); draws the terminal
// state, then for each (s, a) in state-major order a uniform next state and a
// uniform reward in [-1, 1]. The terminal row is then rewritten as a
// zero-reward self-loop; the initial distribution is uniform over nonterminal
// states. Throws Error{kBadSize} unless 2 <= num_states <= 10 and
// 1 <= num_actions <= 4.
DeterministicTabularMdp random_tabular_mdp(std::uint64_t seed, int num_states, int num_actions);

struct ExportOptions {
  // Augment states with the step counter so time-dependent rewards and
  // truncation are reproduced exactly.
  bool time_augmented = false;
  std::size_t max_states = 200000;
};

struct ExportedMdp {
  DeterministicTabularMdp mdp;
  std::vector<std::uint64_t> keys;  // environment state key per state
  std::vector<int> times;           // step counter per state (0 when not augmented)
  std::vector<std::vector<double>> observations;  // empty for the sink
  int sink = -1;  // absorbing terminal state (goal reached or time ran out)
  std::map<std::pair<std::uint64_t, int>, int> index;

  // -1 when (key, t) was not reached.
  int state_of(std::uint64_t key, int t) const;
};

// Enumerates states reachable from the initial states through env's step
// function. Without time augmentation the step counter is reset to 0 before
// each expansion, so rewards are the ones paid on an episode's first step and
// truncation is never reached. Throws Error{kStateSpaceTooLarge}.
ExportedMdp export_tabular(const Environment& env, ExportOptions options = {});

// Minimum number of transitions from any initial-support state to a terminal
// state; empty when none is reachable.
std::optional<int> bfs_shortest_path(const DeterministicTabularMdp& mdp);

struct EnvOptions {
  int max_steps = 256;
  bool modified_turns = true;
};

// "grid_empty", "doorkey_lite", "chain:<n>:<k>", "random:<seed>:<S>:<A>".
// Throws Error{kConfig} for unknown names.
std::unique_ptr<Environment> make_environment(const std::string& name, EnvOptions options = {});

}  // namespace eapo
