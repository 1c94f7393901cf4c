#include "eapo/oracle_suite.hpp"

#include <algorithm>
#include <cmath>

#include "eapo/envs.hpp"
#include "eapo/oracle.hpp"
#include "eapo/rng.hpp"

namespace eapo {

std::vector<OracleCheckRow> run_oracle_check(
    const OracleCheckOptions& options, const std::function<void(const OracleCheckRow&)>& on_row) {
  static constexpr double kTaus[] = {0.0, 0.05, 0.5};
  static constexpr double kGammaH[] = {0.8, 0.99};
  std::vector<OracleCheckRow> rows;
  for (int t = 0; t < options.trials; ++t) {
    CounterRng rng = CounterRng::derive(options.seed, static_cast<std::uint64_t>(t),
                                        StreamPurpose::kTest);
    OracleCheckRow row;
    row.trial = t;
    row.mdp_seed = rng.next_u64();
    row.num_states = 2 + static_cast<int>(rng.uniform_int(9));
    row.num_actions = 2 + static_cast<int>(rng.uniform_int(3));
    row.tau = kTaus[t % 3];
    row.gamma_h = kGammaH[(t / 3) % 2];

    const DeterministicTabularMdp mdp =
        random_tabular_mdp(row.mdp_seed, row.num_states, row.num_actions);
    std::vector<double> logits(static_cast<std::size_t>(row.num_states * row.num_actions));
    for (double& x : logits) x = 1.5 * rng.normal();

    EstimatorConfig cfg;
    cfg.gamma_v = 0.99;
    cfg.gamma_h = row.gamma_h;
    cfg.tau = row.tau;

    const std::vector<double> exact = exact_soft_policy_gradient(mdp, logits, cfg);
    const std::vector<double> fd = finite_difference_gradient(mdp, logits, cfg, options.fd_step);
    row.gradient_error = max_relative_error(exact, fd);

    const TabularPolicy policy = TabularPolicy::from_logits(row.num_states, row.num_actions, logits);
    const OracleSolution sol = oracle_advantages(mdp, policy, cfg);
    for (int s = 0; s < mdp.num_states; ++s) {
      if (mdp.is_terminal(s)) continue;
      const auto su = static_cast<std::size_t>(s);
      double bellman_v = 0.0, bellman_h = sol.entropy[su], mean_a = 0.0, mean_ah = 0.0,
             mean_aha = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const std::size_t i = mdp.index(s, a);
        const auto next = static_cast<std::size_t>(mdp.transition[i]);
        const double p = policy.probs[i];
        bellman_v += p * (mdp.reward[i] + cfg.gamma_v * sol.v[next]);
        bellman_h += p * cfg.gamma_h * sol.v_h[next];
        mean_a += p * sol.a[i];
        mean_ah += p * sol.a_h[i];
        mean_aha += p * sol.a_h_action[i];
      }
      row.value_residual = std::max(row.value_residual, std::abs(sol.v[su] - bellman_v));
      row.entropy_residual = std::max(row.entropy_residual, std::abs(sol.v_h[su] - bellman_h));
      row.advantage_mean = std::max(
          {row.advantage_mean, std::abs(mean_a), std::abs(mean_ah), std::abs(mean_aha)});
    }
    row.pass = row.gradient_error < options.gradient_tolerance &&
               row.value_residual <= options.identity_tolerance &&
               row.entropy_residual <= options.identity_tolerance &&
               row.advantage_mean <= options.identity_tolerance;
    if (on_row) on_row(row);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace eapo
