#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace eapo {

struct OracleCheckOptions {
  int trials = 50;
  std::uint64_t seed = 1;
  double gradient_tolerance = 1e-4;
  double identity_tolerance = 1e-10;
  double fd_step = 1e-5;
};

// One random MDP / softmax policy pair.
struct OracleCheckRow {
  int trial = 0;
  std::uint64_t mdp_seed = 0;
  int num_states = 0;
  int num_actions = 0;
  double tau = 0.0;
  double gamma_h = 0.0;
  double gradient_error = 0.0;   // max component relative error vs finite differences
  double value_residual = 0.0;   // max |V - sum_a pi (r + gamma V')|
  double entropy_residual = 0.0; // max |V_H - H - gamma_h sum_a pi V_H'|
  double advantage_mean = 0.0;   // max |sum_a pi A|, |sum_a pi A_H|, |sum_a pi A_H'|
  bool pass = false;
};

// Trial t uses random_tabular_mdp(mix(seed, t)) with 2..10 states and 2..4
// actions, normal(0, 1.5) logits, tau from {0, 0.05, 0.5} and gamma_h from
// {0.8, 0.99} in rotation, gamma_v = 0.99.
std::vector<OracleCheckRow> run_oracle_check(
    const OracleCheckOptions& options,
    const std::function<void(const OracleCheckRow&)>& on_row = {});

}  // namespace eapo
