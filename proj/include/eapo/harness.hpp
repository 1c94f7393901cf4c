#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eapo/algo.hpp"
#include "eapo/checkpoint.hpp"
#include "eapo/config.hpp"
#include "eapo/envs.hpp"
#include "eapo/net.hpp"

namespace eapo {

inline constexpr const char* kMetricsSchema = "# eapo-metrics v1";
inline constexpr const char* kSummarySchema = "# eapo-summary v1";

struct EpisodeStats {
  double episodic_return = 0.0;
  double trajectory_entropy = 0.0;  // sum of -log pi over the episode
  int length = 0;
};

// One environment with its private random streams and running episode totals.
struct EnvSlot {
  std::unique_ptr<Environment> env;
  CounterRng action_rng;
  CounterRng reset_rng;
  std::vector<double> observation;
  EpisodeStats running;

  EnvSlot(std::unique_ptr<Environment> env, CounterRng action_rng, CounterRng reset_rng);
};

// Slot i uses streams (seed, i, kRollout) and (seed, i, kEnvReset).
std::vector<EnvSlot> make_env_slots(const std::string& env_name, const EnvOptions& options,
                                    int num_envs, std::uint64_t seed);

// num_steps transitions from every slot, env-major. Episodes auto-reset; a
// truncation closes the fragment with the critics at the post-truncation
// observation as bootstrap. Finished episodes are appended to `finished`.
RolloutBuffer collect_rollout(std::vector<EnvSlot>& slots, const DualHeadNetwork& net,
                              int num_steps, bool greedy = false,
                              std::vector<EpisodeStats>* finished = nullptr);

// Sum of -log pi over one complete episode. Throws Error{kIncompleteEpisode}
// unless only the last record ends the episode.
double trajectory_entropy(std::span<const StepRecord> episode);

// Visit frequencies on a [grid_size x grid_size] grid, row-major by y,
// summing to 1 (all zeros when there are no visits).
std::vector<double> visitation_heatmap(const std::vector<std::vector<GridCell>>& episodes,
                                       int grid_size);
void write_heatmap_csv(std::ostream& out, std::span<const double> heatmap, int grid_size);

struct EvalResult {
  std::vector<EpisodeStats> episodes;
  std::vector<std::vector<GridCell>> cells;  // per episode, empty for non-grid envs
  double mean_return = 0.0;
  double mean_entropy = 0.0;
  double mean_length = 0.0;
};

// Runs full episodes. Episode i draws from stream (seed, round * 2^20 + i, purpose).
EvalResult evaluate(const DualHeadNetwork& net, const Environment& prototype, int episodes,
                    std::uint64_t seed, bool greedy = false, std::uint64_t round = 0,
                    StreamPurpose purpose = StreamPurpose::kEval);

struct MetricsRow {
  long long global_step = 0;
  int updates = 0;
  double mean_episodic_return = 0.0;
  double mean_trajectory_entropy = 0.0;
  double mean_episode_length = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy_loss = 0.0;
  double approx_kl = 0.0;
  double mean_state_entropy = 0.0;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

struct TrainOptions {
  bool write_files = true;
  // Called after every evaluation row.
  std::function<void(const MetricsRow&)> on_row;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<UpdateDiagnostics> updates;
  long long global_step = 0;
  Checkpoint checkpoint;
};

DualHeadNetwork make_network(const RunConfig& config, const Environment& env);

// Alternates rollouts and updates. With write_files, writes metrics.csv,
// updates.csv, timing.csv, config.ini and checkpoint.bin under output_dir.
// Error{kNonFiniteLoss} is rethrown with the global step in the message.
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

// Lines of the form "section.key = v1, v2, ..."; '#' starts a comment.
std::vector<GridAxis> parse_grid(std::istream& in);
std::vector<GridAxis> load_grid_file(const std::string& path);

struct SweepRun {
  std::vector<std::pair<std::string, std::string>> overrides;
  std::uint64_t seed = 0;
  std::string output_dir;
  bool ok = false;
  std::string error;
  // Final-window means over the last evaluation rows.
  double mean_return = 0.0;
  double mean_entropy = 0.0;
  double mean_length = 0.0;
};

struct SweepCell {
  std::vector<std::pair<std::string, std::string>> overrides;
  int runs_ok = 0;
  int runs_failed = 0;
  double return_mean = 0.0, return_ci95 = 0.0;
  double entropy_mean = 0.0, entropy_ci95 = 0.0;
  double length_mean = 0.0, length_ci95 = 0.0;
  // Seed whose final trajectory entropy is closest to the cell mean (lowest
  // seed index on ties).
  std::uint64_t representative_seed = 0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepCell> cells;
};

struct SweepOptions {
  int final_window = 3;
  bool write_files = true;
  std::function<void(const SweepRun&)> on_run;
};

// Cross product of the grid, each with every seed. Per-run failures are
// recorded, not thrown. Writes <output_dir>/summary.csv.
SweepResult sweep(const RunConfig& base, const std::vector<GridAxis>& grid,
                  const std::vector<std::uint64_t>& seeds, const SweepOptions& options = {});
void write_summary_csv(std::ostream& out, const std::vector<GridAxis>& grid,
                       const std::vector<SweepCell>& cells);

// mean and 1.96 * sample sd / sqrt(n) (0 for n < 2).
std::pair<double, double> mean_ci95(std::span<const double> values);

struct HeatmapResult {
  int grid_size = 0;
  std::vector<double> frequencies;
  EvalResult eval;
};

// Stochastic rollouts of a checkpoint's policy on its environment.
HeatmapResult checkpoint_heatmap(const Checkpoint& checkpoint, int rollouts, std::uint64_t seed);

}  // namespace eapo
