/* C interface to the eapo library. All functions return an eapo_status; on
 * failure eapo_last_error() holds a message for the calling thread. Handles
 * are opaque and owned by the caller (free with the matching *_free). */
#ifndef EAPO_EAPO_H_
#define EAPO_EAPO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(EAPO_BUILDING_LIBRARY)
#define EAPO_API __attribute__((visibility("default")))
#else
#define EAPO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum eapo_status {
  EAPO_OK = 0,
  EAPO_ERR_INVALID_ARGUMENT = 1,
  EAPO_ERR_INDEX_OUT_OF_RANGE = 2,
  EAPO_ERR_BAD_DISTRIBUTION = 3,
  EAPO_ERR_NON_ABSORBING_TERMINAL = 4,
  EAPO_ERR_BAD_SIZE = 5,
  EAPO_ERR_ACTION_OUT_OF_RANGE = 6,
  EAPO_ERR_STATE_SPACE_TOO_LARGE = 7,
  EAPO_ERR_SINGULAR_SYSTEM = 8,
  EAPO_ERR_SHAPE_MISMATCH = 9,
  EAPO_ERR_NO_CACHED_FORWARD = 10,
  EAPO_ERR_SLICE_MISMATCH = 11,
  EAPO_ERR_NON_FINITE_RATIO = 12,
  EAPO_ERR_NON_FINITE_LOSS = 13,
  EAPO_ERR_INCOMPLETE_EPISODE = 14,
  EAPO_ERR_PARSE = 15,
  EAPO_ERR_IO = 16,
  EAPO_ERR_CONFIG = 17,
  EAPO_ERR_BUFFER_TOO_SMALL = 64,
  EAPO_ERR_INTERNAL = 255
} eapo_status;

EAPO_API const char* eapo_version(void);
EAPO_API const char* eapo_status_name(eapo_status status);
/* Message of the last failure on this thread ("" if none). */
EAPO_API const char* eapo_last_error(void);

/* ---- run configuration ---- */
typedef struct eapo_config eapo_config;

EAPO_API eapo_status eapo_config_default(eapo_config** out);
EAPO_API eapo_status eapo_config_load(const char* path, eapo_config** out);
/* key is "section.key", e.g. "estimator.tau". */
EAPO_API eapo_status eapo_config_set(eapo_config* config, const char* key, const char* value);
/* Canonical INI text. Writes at most capacity bytes including the NUL;
 * *needed receives the full size (including NUL). A NULL buffer only
 * queries the size; a short buffer gets truncated text and
 * EAPO_ERR_BUFFER_TOO_SMALL. */
EAPO_API eapo_status eapo_config_format(const eapo_config* config, char* buffer, size_t capacity,
                                        size_t* needed);
EAPO_API void eapo_config_free(eapo_config* config);

typedef struct eapo_metrics_row {
  int64_t global_step;
  int32_t updates;
  double mean_episodic_return;
  double mean_trajectory_entropy;
  double mean_episode_length;
  double policy_loss;
  double value_loss;
  double entropy_loss;
  double approx_kl;
  double mean_state_entropy;
} eapo_metrics_row;

typedef void (*eapo_row_callback)(const eapo_metrics_row* row, void* user);

/* Trains and writes metrics.csv, updates.csv, timing.csv, config.ini and
 * checkpoint.bin under the config's output directory. */
EAPO_API eapo_status eapo_train(const eapo_config* config, eapo_row_callback on_row, void* user,
                                int64_t* global_step);

typedef struct eapo_sweep_run {
  const char* output_dir;
  uint64_t seed;
  int32_t ok;
  const char* error; /* "" when ok */
  double mean_episodic_return;
  double mean_trajectory_entropy;
  double mean_episode_length;
} eapo_sweep_run;

typedef void (*eapo_sweep_callback)(const eapo_sweep_run* run, void* user);

/* Runs the grid file's cross product for every seed; writes summary.csv and
 * runs.csv under the base output directory. *failed_runs counts runs that
 * raised an error (they do not abort the sweep). */
EAPO_API eapo_status eapo_sweep(const eapo_config* base, const char* grid_path,
                                const uint64_t* seeds, size_t num_seeds,
                                eapo_sweep_callback on_run, void* user, int32_t* failed_runs);

/* ---- checkpoints ---- */
typedef struct eapo_checkpoint eapo_checkpoint;

typedef struct eapo_checkpoint_info {
  char env_name[64];
  uint64_t seed;
  int64_t global_step;
  uint64_t num_params;
  int32_t input_size;
  int32_t num_actions;
} eapo_checkpoint_info;

EAPO_API eapo_status eapo_checkpoint_load(const char* path, eapo_checkpoint** out);
EAPO_API eapo_status eapo_checkpoint_info_get(const eapo_checkpoint* checkpoint,
                                              eapo_checkpoint_info* out);
EAPO_API void eapo_checkpoint_free(eapo_checkpoint* checkpoint);

typedef struct eapo_eval_result {
  int32_t episodes;
  double mean_episodic_return;
  double mean_trajectory_entropy;
  double mean_episode_length;
} eapo_eval_result;

EAPO_API eapo_status eapo_evaluate(const eapo_checkpoint* checkpoint, int32_t episodes,
                                   int32_t greedy, uint64_t seed, eapo_eval_result* out);

/* Visit frequencies of `rollouts` stochastic episodes, row-major by y. With
 * frequencies == NULL only *grid_size is set. */
EAPO_API eapo_status eapo_heatmap(const eapo_checkpoint* checkpoint, int32_t rollouts,
                                  uint64_t seed, double* frequencies, size_t capacity,
                                  int32_t* grid_size);
EAPO_API eapo_status eapo_heatmap_write_csv(const eapo_checkpoint* checkpoint, int32_t rollouts,
                                            uint64_t seed, const char* path);

/* ---- exact oracle ---- */
typedef struct eapo_oracle_row {
  int32_t trial;
  uint64_t mdp_seed;
  int32_t num_states;
  int32_t num_actions;
  double tau;
  double gamma_h;
  double gradient_error;
  double value_residual;
  double entropy_residual;
  double advantage_mean;
  int32_t pass;
} eapo_oracle_row;

typedef void (*eapo_oracle_callback)(const eapo_oracle_row* row, void* user);

EAPO_API eapo_status eapo_oracle_check(int32_t trials, uint64_t seed, eapo_oracle_callback on_row,
                                       void* user, int32_t* failures);

typedef struct eapo_mdp eapo_mdp;
typedef struct eapo_policy eapo_policy;

EAPO_API eapo_status eapo_mdp_load(const char* path, eapo_mdp** out);
EAPO_API void eapo_mdp_free(eapo_mdp* mdp);
EAPO_API eapo_status eapo_policy_load(const char* path, eapo_policy** out);
EAPO_API void eapo_policy_free(eapo_policy* policy);

/* Per-(s, a) oracle table as CSV, using the estimator settings of `config`
 * (defaults when NULL). path == NULL writes to standard output. */
EAPO_API eapo_status eapo_oracle_dump(const eapo_mdp* mdp, const eapo_policy* policy,
                                      const eapo_config* config, const char* path);

#ifdef __cplusplus
}
#endif

#endif /* EAPO_EAPO_H_ */
