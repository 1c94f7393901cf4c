#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace eapo {

// Finite deterministic MDP. Tables are state-major: index s * num_actions + a.
// Terminal states are absorbing zero-reward self-loops.
struct DeterministicTabularMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<int> transition;
  std::vector<double> reward;
  std::vector<double> initial_distribution;
  std::vector<std::uint8_t> terminal_mask;

  std::size_t index(int s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
           static_cast<std::size_t>(a);
  }
  int next_state(int s, int a) const { return transition[index(s, a)]; }
  double reward_of(int s, int a) const { return reward[index(s, a)]; }
  bool is_terminal(int s) const { return terminal_mask[static_cast<std::size_t>(s)] != 0; }

  bool operator==(const DeterministicTabularMdp&) const = default;
};

// Throws Error{kShapeMismatch | kIndexOutOfRange | kBadDistribution |
// kNonAbsorbingTerminal}; returns the argument unchanged otherwise.
const DeterministicTabularMdp& validate_mdp(const DeterministicTabularMdp& mdp);

// Plain-text format (see docs/formats.md):
//   S A
//   next reward          (S*A lines, state-major)
//   rho_0 ... rho_{S-1}
//   term_0 ... term_{S-1}
// Blank lines and lines starting with '#' are ignored.
DeterministicTabularMdp read_mdp_text(std::istream& in);
void write_mdp_text(std::ostream& out, const DeterministicTabularMdp& mdp);
DeterministicTabularMdp load_mdp_file(const std::string& path);
void save_mdp_file(const std::string& path, const DeterministicTabularMdp& mdp);

// The four discounting knobs, the temperature, and the PPO loss weights.
struct EstimatorConfig {
  double gamma_v = 0.99;
  double lambda_v = 0.95;
  double gamma_h = 0.9;
  double lambda_h = 0.0;
  double tau = 0.003;
  double clip_epsilon = 0.2;
  double c1 = 0.5;
  double c2 = 1.0;
  bool normalize_advantage = true;

  // Throws Error{kConfig} on out-of-range values. gamma_h == 1 is accepted
  // only when episodic is true.
  void validate(bool episodic = true) const;
};

enum class TerminalKind : std::uint8_t { kNone = 0, kTerminated = 1, kTruncated = 2 };

const char* terminal_kind_name(TerminalKind kind);

struct StepRecord {
  std::vector<double> observation;
  int action = 0;
  double reward = 0.0;
  double log_prob = 0.0;  // ln pi_behaviour(action | observation)
  double value_pred = 0.0;          // denormalized
  double entropy_value_pred = 0.0;  // denormalized
  TerminalKind terminal_kind = TerminalKind::kNone;
};

// A contiguous run of records from one environment. Records [begin, end).
// Bootstrap values are the critics at the observation following the last
// record; they are used when that record is truncated or not terminal.
struct Fragment {
  std::size_t begin = 0;
  std::size_t end = 0;
  double bootstrap_value = 0.0;
  double bootstrap_entropy_value = 0.0;
};

struct RolloutBuffer {
  std::vector<StepRecord> records;
  std::vector<Fragment> fragments;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  // Appends a fragment covering the given records.
  void add_fragment(std::vector<StepRecord> steps, double bootstrap_value,
                    double bootstrap_entropy_value);
};

// Throws Error{kSliceMismatch} when fragments do not partition the records in
// order, or a truncated record is not the last record of its fragment;
// Error{kInvalidArgument} on a non-finite or positive log_prob.
void validate_buffer(const RolloutBuffer& buffer);

// Inclusive record range [first, last] of one episode piece.
struct EpisodeSlice {
  std::size_t first = 0;
  std::size_t last = 0;
  TerminalKind kind = TerminalKind::kNone;
  std::size_t fragment = 0;

  bool operator==(const EpisodeSlice&) const = default;
};

// Splits the buffer at terminal records and fragment ends. When the buffer has
// no fragment table, it is treated as a single fragment.
std::vector<EpisodeSlice> episode_slices(const RolloutBuffer& buffer);

}  // namespace eapo
