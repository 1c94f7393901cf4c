#include "eapo/eapo.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <new>
#include <string>

#include "eapo/checkpoint.hpp"
#include "eapo/config.hpp"
#include "eapo/error.hpp"
#include "eapo/harness.hpp"
#include "eapo/oracle.hpp"
#include "eapo/oracle_suite.hpp"

struct eapo_config {
  eapo::RunConfig value;
};
struct eapo_checkpoint {
  eapo::Checkpoint value;
};
struct eapo_mdp {
  eapo::DeterministicTabularMdp value;
};
struct eapo_policy {
  eapo::TabularPolicy value;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
eapo_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const eapo::Error& e) {
    g_last_error = e.what();
    return static_cast<eapo_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return EAPO_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return EAPO_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return EAPO_ERR_INTERNAL;
  }
}

eapo_status invalid(const char* what) {
  g_last_error = std::string("InvalidArgument: ") + what;
  return EAPO_ERR_INVALID_ARGUMENT;
}

eapo_metrics_row to_c(const eapo::MetricsRow& r) {
  eapo_metrics_row out{};
  out.global_step = r.global_step;
  out.updates = r.updates;
  out.mean_episodic_return = r.mean_episodic_return;
  out.mean_trajectory_entropy = r.mean_trajectory_entropy;
  out.mean_episode_length = r.mean_episode_length;
  out.policy_loss = r.policy_loss;
  out.value_loss = r.value_loss;
  out.entropy_loss = r.entropy_loss;
  out.approx_kl = r.approx_kl;
  out.mean_state_entropy = r.mean_state_entropy;
  return out;
}

}  // namespace

extern "C" {

const char* eapo_version(void) { return "0.1.0"; }

const char* eapo_status_name(eapo_status status) {
  switch (status) {
    case EAPO_OK: return "Ok";
    case EAPO_ERR_BUFFER_TOO_SMALL: return "BufferTooSmall";
    case EAPO_ERR_INTERNAL: return "Internal";
    default: break;
  }
  const int code = static_cast<int>(status);
  if (code >= 1 && code <= static_cast<int>(eapo::ErrorCode::kConfig)) {
    return eapo::error_code_name(static_cast<eapo::ErrorCode>(code)).data();
  }
  return "Unknown";
}

const char* eapo_last_error(void) { return g_last_error.c_str(); }

eapo_status eapo_config_default(eapo_config** out) {
  if (out == nullptr) return invalid("out is null");
  return guarded([&] {
    *out = new eapo_config{};
    return EAPO_OK;
  });
}

eapo_status eapo_config_load(const char* path, eapo_config** out) {
  if (path == nullptr || out == nullptr) return invalid("path or out is null");
  return guarded([&] {
    *out = new eapo_config{eapo::load_run_config(path)};
    return EAPO_OK;
  });
}

eapo_status eapo_config_set(eapo_config* config, const char* key, const char* value) {
  if (config == nullptr || key == nullptr || value == nullptr) return invalid("null argument");
  return guarded([&] {
    eapo::RunConfig updated = config->value;
    eapo::apply_config_override(updated, key, value);
    config->value = updated;
    return EAPO_OK;
  });
}

eapo_status eapo_config_format(const eapo_config* config, char* buffer, size_t capacity,
                               size_t* needed) {
  if (config == nullptr) return invalid("config is null");
  return guarded([&] {
    const std::string text = eapo::format_run_config(config->value);
    if (needed != nullptr) *needed = text.size() + 1;
    if (buffer == nullptr || capacity == 0) return EAPO_OK;
    const size_t n = std::min(capacity - 1, text.size());
    std::memcpy(buffer, text.data(), n);
    buffer[n] = '\0';
    if (n < text.size()) {
      g_last_error = "BufferTooSmall: config text truncated";
      return EAPO_ERR_BUFFER_TOO_SMALL;
    }
    return EAPO_OK;
  });
}

void eapo_config_free(eapo_config* config) { delete config; }

eapo_status eapo_train(const eapo_config* config, eapo_row_callback on_row, void* user,
                       int64_t* global_step) {
  if (config == nullptr) return invalid("config is null");
  return guarded([&] {
    eapo::TrainOptions options;
    if (on_row != nullptr) {
      options.on_row = [&](const eapo::MetricsRow& row) {
        const eapo_metrics_row c = to_c(row);
        on_row(&c, user);
      };
    }
    const eapo::TrainResult result = eapo::train(config->value, options);
    if (global_step != nullptr) *global_step = result.global_step;
    return EAPO_OK;
  });
}

eapo_status eapo_sweep(const eapo_config* base, const char* grid_path, const uint64_t* seeds,
                       size_t num_seeds, eapo_sweep_callback on_run, void* user,
                       int32_t* failed_runs) {
  if (base == nullptr || grid_path == nullptr || (seeds == nullptr && num_seeds > 0)) {
    return invalid("null argument");
  }
  return guarded([&] {
    const std::vector<eapo::GridAxis> grid = eapo::load_grid_file(grid_path);
    const std::vector<std::uint64_t> seed_list(seeds, seeds + num_seeds);
    eapo::SweepOptions options;
    if (on_run != nullptr) {
      options.on_run = [&](const eapo::SweepRun& run) {
        eapo_sweep_run c{};
        c.output_dir = run.output_dir.c_str();
        c.seed = run.seed;
        c.ok = run.ok ? 1 : 0;
        c.error = run.error.c_str();
        c.mean_episodic_return = run.mean_return;
        c.mean_trajectory_entropy = run.mean_entropy;
        c.mean_episode_length = run.mean_length;
        on_run(&c, user);
      };
    }
    const eapo::SweepResult result = eapo::sweep(base->value, grid, seed_list, options);
    if (failed_runs != nullptr) {
      *failed_runs = static_cast<int32_t>(
          std::count_if(result.runs.begin(), result.runs.end(), [](const auto& r) { return !r.ok; }));
    }
    return EAPO_OK;
  });
}

eapo_status eapo_checkpoint_load(const char* path, eapo_checkpoint** out) {
  if (path == nullptr || out == nullptr) return invalid("path or out is null");
  return guarded([&] {
    *out = new eapo_checkpoint{eapo::load_checkpoint(path)};
    return EAPO_OK;
  });
}

eapo_status eapo_checkpoint_info_get(const eapo_checkpoint* checkpoint, eapo_checkpoint_info* out) {
  if (checkpoint == nullptr || out == nullptr) return invalid("null argument");
  return guarded([&] {
    const eapo::Checkpoint& c = checkpoint->value;
    *out = eapo_checkpoint_info{};
    const size_t n = std::min(sizeof(out->env_name) - 1, c.env_name.size());
    std::memcpy(out->env_name, c.env_name.data(), n);
    out->env_name[n] = '\0';
    out->seed = c.seed;
    out->global_step = c.global_step;
    out->num_params = c.params.size();
    out->input_size = c.network.input_size;
    out->num_actions = c.network.num_actions;
    return EAPO_OK;
  });
}

void eapo_checkpoint_free(eapo_checkpoint* checkpoint) { delete checkpoint; }

eapo_status eapo_evaluate(const eapo_checkpoint* checkpoint, int32_t episodes, int32_t greedy,
                          uint64_t seed, eapo_eval_result* out) {
  if (checkpoint == nullptr || out == nullptr) return invalid("null argument");
  if (episodes <= 0) return invalid("episodes must be positive");
  return guarded([&] {
    const eapo::Checkpoint& c = checkpoint->value;
    const auto env = eapo::make_environment(c.env_name, c.env_options);
    const eapo::DualHeadNetwork net = eapo::restore_network(c);
    const eapo::EvalResult r = eapo::evaluate(net, *env, episodes, seed, greedy != 0);
    out->episodes = episodes;
    out->mean_episodic_return = r.mean_return;
    out->mean_trajectory_entropy = r.mean_entropy;
    out->mean_episode_length = r.mean_length;
    return EAPO_OK;
  });
}

eapo_status eapo_heatmap(const eapo_checkpoint* checkpoint, int32_t rollouts, uint64_t seed,
                         double* frequencies, size_t capacity, int32_t* grid_size) {
  if (checkpoint == nullptr || grid_size == nullptr) return invalid("null argument");
  return guarded([&] {
    const auto env = eapo::make_environment(checkpoint->value.env_name, checkpoint->value.env_options);
    *grid_size = env->grid_size();
    if (frequencies == nullptr) return EAPO_OK;
    const eapo::HeatmapResult h = eapo::checkpoint_heatmap(checkpoint->value, rollouts, seed);
    if (capacity < h.frequencies.size()) {
      g_last_error = "BufferTooSmall: heatmap needs grid_size^2 values";
      return EAPO_ERR_BUFFER_TOO_SMALL;
    }
    std::copy(h.frequencies.begin(), h.frequencies.end(), frequencies);
    return EAPO_OK;
  });
}

eapo_status eapo_heatmap_write_csv(const eapo_checkpoint* checkpoint, int32_t rollouts,
                                   uint64_t seed, const char* path) {
  if (checkpoint == nullptr || path == nullptr) return invalid("null argument");
  return guarded([&] {
    const eapo::HeatmapResult h = eapo::checkpoint_heatmap(checkpoint->value, rollouts, seed);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw eapo::Error(eapo::ErrorCode::kIo, std::string("cannot write ") + path);
    eapo::write_heatmap_csv(out, h.frequencies, h.grid_size);
    return EAPO_OK;
  });
}

eapo_status eapo_oracle_check(int32_t trials, uint64_t seed, eapo_oracle_callback on_row,
                              void* user, int32_t* failures) {
  if (trials <= 0) return invalid("trials must be positive");
  return guarded([&] {
    eapo::OracleCheckOptions options;
    options.trials = trials;
    options.seed = seed;
    int32_t failed = 0;
    eapo::run_oracle_check(options, [&](const eapo::OracleCheckRow& r) {
      if (!r.pass) ++failed;
      if (on_row == nullptr) return;
      eapo_oracle_row c{};
      c.trial = r.trial;
      c.mdp_seed = r.mdp_seed;
      c.num_states = r.num_states;
      c.num_actions = r.num_actions;
      c.tau = r.tau;
      c.gamma_h = r.gamma_h;
      c.gradient_error = r.gradient_error;
      c.value_residual = r.value_residual;
      c.entropy_residual = r.entropy_residual;
      c.advantage_mean = r.advantage_mean;
      c.pass = r.pass ? 1 : 0;
      on_row(&c, user);
    });
    if (failures != nullptr) *failures = failed;
    return EAPO_OK;
  });
}

eapo_status eapo_mdp_load(const char* path, eapo_mdp** out) {
  if (path == nullptr || out == nullptr) return invalid("path or out is null");
  return guarded([&] {
    *out = new eapo_mdp{eapo::load_mdp_file(path)};
    return EAPO_OK;
  });
}

void eapo_mdp_free(eapo_mdp* mdp) { delete mdp; }

eapo_status eapo_policy_load(const char* path, eapo_policy** out) {
  if (path == nullptr || out == nullptr) return invalid("path or out is null");
  return guarded([&] {
    *out = new eapo_policy{eapo::load_policy_file(path)};
    return EAPO_OK;
  });
}

void eapo_policy_free(eapo_policy* policy) { delete policy; }

eapo_status eapo_oracle_dump(const eapo_mdp* mdp, const eapo_policy* policy,
                             const eapo_config* config, const char* path) {
  if (mdp == nullptr || policy == nullptr) return invalid("mdp or policy is null");
  return guarded([&] {
    const eapo::EstimatorConfig est =
        config != nullptr ? config->value.estimator : eapo::EstimatorConfig{};
    eapo::validate_policy(policy->value, mdp->value);
    const eapo::OracleSolution sol = eapo::oracle_advantages(mdp->value, policy->value, est);
    if (path == nullptr) {
      eapo::write_oracle_csv(std::cout, mdp->value, policy->value, sol);
      std::cout.flush();
    } else {
      std::ofstream out(path, std::ios::trunc);
      if (!out) throw eapo::Error(eapo::ErrorCode::kIo, std::string("cannot write ") + path);
      eapo::write_oracle_csv(out, mdp->value, policy->value, sol);
    }
    return EAPO_OK;
  });
}

}  // extern "C"
