// Command-line driver over the C API.
#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "eapo/eapo.h"

namespace {

int report(eapo_status status) {
  if (status == EAPO_OK) return 0;
  std::fprintf(stderr, "error (%s): %s\n", eapo_status_name(status), eapo_last_error());
  return 1;
}

void print_row(const eapo_metrics_row* r, void*) {
  std::printf("step %lld  return %.4f  entropy %.4f  length %.2f  kl %.5f\n",
              static_cast<long long>(r->global_step), r->mean_episodic_return,
              r->mean_trajectory_entropy, r->mean_episode_length, r->approx_kl);
  std::fflush(stdout);
}

void print_sweep_run(const eapo_sweep_run* r, void*) {
  if (r->ok) {
    std::printf("%s  return %.4f  entropy %.4f  length %.2f\n", r->output_dir,
                r->mean_episodic_return, r->mean_trajectory_entropy, r->mean_episode_length);
  } else {
    std::printf("%s  FAILED: %s\n", r->output_dir, r->error);
  }
  std::fflush(stdout);
}

void print_oracle_row(const eapo_oracle_row* r, void*) {
  std::printf("%d,%llu,%d,%d,%g,%g,%.3e,%.3e,%.3e,%.3e,%s\n", r->trial,
              static_cast<unsigned long long>(r->mdp_seed), r->num_states, r->num_actions, r->tau,
              r->gamma_h, r->gradient_error, r->value_residual, r->entropy_residual,
              r->advantage_mean, r->pass ? "pass" : "FAIL");
}

struct ConfigHandle {
  eapo_config* ptr = nullptr;
  ~ConfigHandle() { eapo_config_free(ptr); }
};
struct CheckpointHandle {
  eapo_checkpoint* ptr = nullptr;
  ~CheckpointHandle() { eapo_checkpoint_free(ptr); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-advantage policy optimization toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(eapo_version()));

  std::string config_path, out_dir, checkpoint_path, grid_path, mdp_path, policy_path, out_path;
  std::string heatmap_out = "heatmap.csv";
  std::uint64_t seed = 0, trial_seed = 1;
  int episodes = 100, rollouts = 100, trials = 50;
  bool greedy = false, quiet = false;
  std::vector<std::uint64_t> seeds;

  auto* train = app.add_subcommand("train", "Train one run from a config file");
  train->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  auto* train_seed = train->add_option("--seed", seed, "Override run.seed");
  train->add_option("--out", out_dir, "Override run.output_dir");
  train->add_flag("--quiet", quiet, "Do not print evaluation rows");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Episodes")->check(CLI::PositiveNumber);
  eval->add_flag("--greedy", greedy, "Argmax actions instead of sampling");
  eval->add_option("--seed", seed, "Evaluation seed");

  auto* sweep = app.add_subcommand("sweep", "Run a grid of configs over several seeds");
  sweep->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid", grid_path, "Grid file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")->required()->delimiter(',');
  sweep->add_option("--out", out_dir, "Override run.output_dir");

  auto* oracle_check = app.add_subcommand("oracle-check", "Exact gradient and identity checks on random MDPs");
  oracle_check->add_option("--trials", trials, "Random MDP/policy pairs")->check(CLI::PositiveNumber);
  oracle_check->add_option("--seed", trial_seed, "Trial seed")->capture_default_str();

  auto* oracle_dump = app.add_subcommand("oracle-dump", "Exact values and advantages of a tabular policy");
  oracle_dump->add_option("--mdp", mdp_path, "MDP text file")->required()->check(CLI::ExistingFile);
  oracle_dump->add_option("--policy", policy_path, "Policy text file")->required()->check(CLI::ExistingFile);
  oracle_dump->add_option("--config", config_path, "Config whose [estimator] section is used")->check(CLI::ExistingFile);
  oracle_dump->add_option("--out", out_path, "Output CSV (default stdout)");

  auto* heatmap = app.add_subcommand("heatmap", "State-visitation frequencies of a checkpoint's policy");
  heatmap->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  heatmap->add_option("--rollouts", rollouts, "Episodes")->check(CLI::PositiveNumber);
  heatmap->add_option("--seed", seed, "Rollout seed");
  heatmap->add_option("--out", heatmap_out, "Output CSV")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    ConfigHandle cfg;
    if (int rc = report(eapo_config_load(config_path.c_str(), &cfg.ptr))) return rc;
    if (*train_seed) {
      if (int rc = report(eapo_config_set(cfg.ptr, "run.seed", std::to_string(seed).c_str()))) return rc;
    }
    if (!out_dir.empty()) {
      if (int rc = report(eapo_config_set(cfg.ptr, "run.output_dir", out_dir.c_str()))) return rc;
    }
    int64_t steps = 0;
    if (int rc = report(eapo_train(cfg.ptr, quiet ? nullptr : print_row, nullptr, &steps))) return rc;
    std::printf("trained %lld steps\n", static_cast<long long>(steps));
    return 0;
  }
  if (eval->parsed()) {
    CheckpointHandle ckpt;
    if (int rc = report(eapo_checkpoint_load(checkpoint_path.c_str(), &ckpt.ptr))) return rc;
    eapo_eval_result r{};
    if (int rc = report(eapo_evaluate(ckpt.ptr, episodes, greedy ? 1 : 0, seed, &r))) return rc;
    std::printf("episodes,mean_episodic_return,mean_trajectory_entropy,mean_episode_length\n");
    std::printf("%d,%.10g,%.10g,%.10g\n", r.episodes, r.mean_episodic_return,
                r.mean_trajectory_entropy, r.mean_episode_length);
    return 0;
  }
  if (sweep->parsed()) {
    ConfigHandle cfg;
    if (int rc = report(eapo_config_load(config_path.c_str(), &cfg.ptr))) return rc;
    if (!out_dir.empty()) {
      if (int rc = report(eapo_config_set(cfg.ptr, "run.output_dir", out_dir.c_str()))) return rc;
    }
    int32_t failed = 0;
    if (int rc = report(eapo_sweep(cfg.ptr, grid_path.c_str(), seeds.data(), seeds.size(),
                                   print_sweep_run, nullptr, &failed))) {
      return rc;
    }
    std::printf("sweep finished, %d failed run(s)\n", failed);
    return failed == 0 ? 0 : 1;
  }
  if (oracle_check->parsed()) {
    std::printf("trial,mdp_seed,states,actions,tau,gamma_h,gradient_error,value_residual,"
                "entropy_residual,advantage_mean,result\n");
    int32_t failures = 0;
    if (int rc = report(eapo_oracle_check(trials, trial_seed, print_oracle_row, nullptr,
                                          &failures))) {
      return rc;
    }
    std::fprintf(stderr, "%d/%d trials passed\n", trials - failures, trials);
    return failures == 0 ? 0 : 1;
  }
  if (oracle_dump->parsed()) {
    eapo_mdp* mdp = nullptr;
    eapo_policy* policy = nullptr;
    ConfigHandle cfg;
    int rc = report(eapo_mdp_load(mdp_path.c_str(), &mdp));
    if (rc == 0) rc = report(eapo_policy_load(policy_path.c_str(), &policy));
    if (rc == 0 && !config_path.empty()) rc = report(eapo_config_load(config_path.c_str(), &cfg.ptr));
    if (rc == 0) {
      rc = report(eapo_oracle_dump(mdp, policy, cfg.ptr, out_path.empty() ? nullptr : out_path.c_str()));
    }
    eapo_policy_free(policy);
    eapo_mdp_free(mdp);
    return rc;
  }
  if (heatmap->parsed()) {
    CheckpointHandle ckpt;
    if (int rc = report(eapo_checkpoint_load(checkpoint_path.c_str(), &ckpt.ptr))) return rc;
    if (int rc = report(eapo_heatmap_write_csv(ckpt.ptr, rollouts, seed, heatmap_out.c_str()))) return rc;
    std::printf("wrote %s\n", heatmap_out.c_str());
    return 0;
  }
  return 0;
}
