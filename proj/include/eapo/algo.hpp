#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eapo/estimation.hpp"
#include "eapo/mdp.hpp"
#include "eapo/net.hpp"
#include "eapo/rng.hpp"

namespace eapo {

enum class AlgoKind { kEapoPpo, kEapoTrpo, kPpoEntropyBonus, kPpoEntropyReward };

// "eapo_ppo" | "eapo_trpo" | "ppo_entbonus" | "ppo_entreward". Throws Error{kConfig}.
AlgoKind parse_algo(const std::string& name);
const char* algo_name(AlgoKind kind);

struct PpoUpdateConfig {
  int epochs = 4;
  // Clamped to the buffer size when larger.
  int minibatch_size = 1024;
  double max_grad_norm = 0.5;
  double learning_rate = 5e-4;
  // Entropy bonus weight; only ppo_entbonus reads it.
  double entropy_coef = 0.0;
  bool popart = true;

  void validate() const;  // Error{kConfig}
};

struct TrpoUpdateConfig {
  double kl_delta = 0.07;
  int cg_iters = 10;
  double cg_damping = 0.1;
  double backtrack_coeff = 0.8;
  int backtrack_steps = 10;
  double accept_kl_factor = 1.5;
  int critic_epochs = 4;
  int critic_minibatch_size = 1024;
  double critic_learning_rate = 5e-4;
  double max_grad_norm = 0.5;
  bool popart = true;

  void validate() const;  // Error{kConfig}
};

struct PolicyObjective {
  double objective = 0.0;  // mean of min(r A, clip(r) A), to be maximized
  // d objective / d log_prob_new per sample (includes the 1/n of the mean).
  std::vector<double> seed;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;  // mean((r - 1) - log r)
};

// Throws Error{kNonFiniteRatio} when some ratio is not finite,
// Error{kShapeMismatch} on misaligned inputs.
PolicyObjective ppo_policy_objective(std::span<const double> log_prob_new,
                                     std::span<const double> log_prob_old,
                                     std::span<const double> adv_soft, double clip_epsilon);

// One minibatch, gathered from a rollout.
struct Minibatch {
  std::size_t size = 0;
  std::vector<double> observations;  // [size x input_size]
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> target_v_norm;  // PopArt-normalized targets
  std::vector<double> target_h_norm;  // empty: entropy head not trained
};

struct LossTerms {
  bool policy = true;      // clipped surrogate
  bool value = true;       // 0.5 MSE on the value head
  bool entropy = true;     // 0.5 MSE on the entropy head (needs target_h_norm)
  double entropy_bonus = 0.0;  // weight on mean policy entropy
};

struct MinibatchLoss {
  double loss = 0.0;  // -objective + c1 (L_V + c2 L_H) - bonus * mean H
  double policy_objective = 0.0;
  double value_loss = 0.0;
  double entropy_loss = 0.0;
  double mean_entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  std::vector<double> gradient;  // d loss / d params
};

MinibatchLoss ppo_minibatch_loss(const DualHeadNetwork& net, const Minibatch& batch,
                                 const EstimatorConfig& est, const LossTerms& terms);

struct UpdateDiagnostics {
  double policy_loss = 0.0;  // -objective, minibatch mean
  double value_loss = 0.0;
  double entropy_loss = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double mean_entropy = 0.0;  // state entropy at visited states, minibatch mean
  double grad_norm = 0.0;     // pre-clipping, minibatch mean
  int minibatches = 0;
  bool popart_degenerate = false;
  // TRPO only.
  bool step_accepted = false;
  int backtracks = 0;
  double step_kl = 0.0;        // empirical KL of the accepted step
  double final_kl = 0.0;       // KL after the critic epochs
  double surrogate_gain = 0.0;
  double cg_residual = 0.0;
};

struct PpoOptions {
  // Skip the entropy head in the loss and its PopArt statistics.
  bool detach_entropy_head = false;
};

// All update functions restore the network (parameters and PopArt stats) and
// rethrow Error{kNonFiniteLoss} when a minibatch loss is not finite.
UpdateDiagnostics eapo_ppo_update(DualHeadNetwork& net, AdamOptimizer& optimizer,
                                  const RolloutBuffer& buffer, const EstimatorConfig& est,
                                  const PpoUpdateConfig& cfg, CounterRng& shuffle_rng,
                                  PpoOptions options = {});

UpdateDiagnostics eapo_trpo_update(DualHeadNetwork& net, AdamOptimizer& critic_optimizer,
                                   const RolloutBuffer& buffer, const EstimatorConfig& est,
                                   const TrpoUpdateConfig& cfg, CounterRng& shuffle_rng);

// Plain PPO on adv_v with c_ent * mean state entropy added to the objective.
UpdateDiagnostics baseline_ppo_entropy_bonus(DualHeadNetwork& net, AdamOptimizer& optimizer,
                                             const RolloutBuffer& buffer,
                                             const EstimatorConfig& est,
                                             const PpoUpdateConfig& cfg, CounterRng& shuffle_rng);

// Plain PPO on the reward r - tau log pi with a single value stream.
UpdateDiagnostics baseline_entropy_reward_ppo(DualHeadNetwork& net, AdamOptimizer& optimizer,
                                              const RolloutBuffer& buffer,
                                              const EstimatorConfig& est,
                                              const PpoUpdateConfig& cfg,
                                              CounterRng& shuffle_rng);

// Mean KL(pi_old || pi_new) over rows of two [n x num_actions] log-prob tables.
double mean_kl(std::span<const double> log_probs_old, std::span<const double> log_probs_new,
               int num_actions);

// Conjugate gradient for A x = b with A given as a product. Returns x;
// residual_norm receives ||A x - b|| as tracked by the iteration.
std::vector<double> conjugate_gradient(
    const std::function<std::vector<double>(std::span<const double>)>& apply,
    std::span<const double> b, int iterations, double* residual_norm = nullptr,
    double tolerance = 1e-10);

// (F + damping I) v with F = J^T (diag pi - pi pi^T) J / n the Fisher matrix of
// the policy over the batch, equal to the Hessian of the mean KL at theta_old.
std::vector<double> fisher_vector_product(const DualHeadNetwork& net, const ForwardPass& pass,
                                          std::span<const double> probs,
                                          std::span<const double> v, double damping);

}  // namespace eapo
