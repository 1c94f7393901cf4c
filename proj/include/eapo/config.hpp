#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "eapo/algo.hpp"
#include "eapo/envs.hpp"
#include "eapo/mdp.hpp"
#include "eapo/net.hpp"

namespace eapo {

// One training run. Schema: docs/config.md.
struct RunConfig {
  std::string env = "grid_empty";
  AlgoKind algo = AlgoKind::kEapoPpo;
  std::uint64_t seed = 1;
  long long total_timesteps = 500000;
  int num_envs = 16;
  int num_steps = 128;
  long long eval_every = 20480;
  int eval_episodes = 100;
  std::string output_dir = "runs/default";

  EstimatorConfig estimator;
  PpoUpdateConfig ppo;
  TrpoUpdateConfig trpo;

  std::vector<int> hidden{64, 64};
  // Unset: shared for the PPO variants, separate policy trunk for TRPO.
  std::optional<bool> shared_trunk;
  bool popart = true;
  double popart_beta = 0.03;

  EnvOptions env_options;

  bool resolved_shared_trunk() const;
  long long steps_per_rollout() const {
    return static_cast<long long>(num_envs) * static_cast<long long>(num_steps);
  }
  // Throws Error{kConfig}.
  void validate() const;
};

// INI-style text: [section] headers and key = value lines; '#' or ';' starts a
// comment line. Unknown sections or keys throw Error{kConfig}.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

// Sets one "section.key" to a textual value, e.g. ("estimator.tau", "0.003").
void apply_config_override(RunConfig& config, const std::string& key, const std::string& value);

// Every settable key, in documentation order.
std::vector<std::string> config_keys();

// Canonical INI text of the config (round-trips through parse_run_config).
std::string format_run_config(const RunConfig& config);

}  // namespace eapo
