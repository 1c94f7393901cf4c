#pragma once

#include <span>
#include <vector>

#include "eapo/mdp.hpp"

namespace eapo {

// delta = reward + gamma * v_bar - v_s with v_bar = 0 when terminated and
// v_next otherwise. For a truncated step the caller passes the bootstrap value
// (the critic at the post-truncation observation) as v_next.
double value_td_residual(double reward, double v_s, double v_next, TerminalKind kind,
                         double gamma_v);

// delta_H = -log_prob + gamma_h * v_bar - v_h_s, same bootstrap rule.
double entropy_td_residual(double log_prob, double v_h_s, double v_h_next, TerminalKind kind,
                           double gamma_h);

// A_t = delta_t + gamma lambda A_{t+1} inside each slice; A_last = delta_last.
// Throws Error{kSliceMismatch} unless the slices cover the residuals in order.
std::vector<double> gae(std::span<const double> residuals, std::span<const EpisodeSlice> slices,
                        double gamma, double lambda);

// target_t = advantage_t + prediction_t. Throws Error{kShapeMismatch}.
std::vector<double> critic_targets(std::span<const double> advantages,
                                   std::span<const double> predictions);

// adv_v + tau adv_h, optionally standardized over the whole batch
// (sample std with n - 1, plus 1e-8). Throws Error{kShapeMismatch}.
std::vector<double> combine_soft_advantage(std::span<const double> adv_v,
                                           std::span<const double> adv_h, double tau,
                                           bool normalize);

// In-place standardization used by combine_soft_advantage.
void normalize_advantages(std::vector<double>& adv);

struct AdvantageBatch {
  std::vector<double> delta_v;
  std::vector<double> delta_h;
  std::vector<double> adv_v;
  std::vector<double> adv_h;
  std::vector<double> adv_soft;
  std::vector<double> target_v;
  std::vector<double> target_h;

  std::size_t size() const { return adv_soft.size(); }
};

// Both residual streams, both GAE passes with their own (gamma, lambda),
// critic targets and the soft combination. Predictions in the buffer are
// already denormalized.
AdvantageBatch estimate_batch(const RolloutBuffer& buffer, const EstimatorConfig& cfg);

// Single value stream on the reward r - tau log pi (gamma_v, lambda_v); the
// entropy fields are zero and adv_soft is adv_v (normalized if configured).
AdvantageBatch estimate_entropy_reward_batch(const RolloutBuffer& buffer,
                                             const EstimatorConfig& cfg);

}  // namespace eapo
