#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eapo/mdp.hpp"

namespace eapo {

// pi(a|s), state-major. When logits are present, probs is their row softmax.
struct TabularPolicy {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> probs;
  std::optional<std::vector<double>> logits;

  double prob(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions) +
                 static_cast<std::size_t>(a)];
  }

  static TabularPolicy uniform(int num_states, int num_actions);
  static TabularPolicy from_logits(int num_states, int num_actions, std::vector<double> logits);
  // Deterministic policy choosing actions[s] in state s.
  static TabularPolicy deterministic(int num_actions, const std::vector<int>& actions);
};

// Throws Error{kShapeMismatch | kBadDistribution}.
void validate_policy(const TabularPolicy& policy, const DeterministicTabularMdp& mdp);

// Text format: "probs S A" or "logits S A" followed by S rows of A numbers.
TabularPolicy read_policy_text(std::istream& in);
TabularPolicy load_policy_file(const std::string& path);

// Shannon entropy of pi(.|s) in nats, with 0 log 0 = 0.
double state_entropy(const TabularPolicy& policy, int s);

struct ValueSolution {
  std::vector<double> v;  // per state
  std::vector<double> q;  // per (s, a)
};

// V(s) = sum_a pi(a|s) (r(s,a) + gamma V(T(s,a))), V = 0 at terminal states,
// solved directly with a sparse LU factorization. Throws Error{kSingularSystem}.
ValueSolution solve_value(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                          double gamma_v);

// V_H(s) = H(pi(.|s)) + gamma_h sum_a pi(a|s) V_H(T(s,a)), V_H = 0 at terminal
// states; q holds Q_H(s,a) = gamma_h V_H(T(s,a)).
ValueSolution solve_entropy_value(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                                  double gamma_h);

// E_{s0 ~ rho}[V(s0) + tau V_H(s0)].
double soft_objective(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                      const EstimatorConfig& cfg);

struct OracleSolution {
  std::vector<double> v;
  std::vector<double> v_h;
  std::vector<double> entropy;  // H(pi(.|s))
  std::vector<double> q;
  std::vector<double> q_h;
  std::vector<double> a;       // Q - V
  std::vector<double> a_h;     // Q_H - V_H + H(pi(.|s)); mean zero under pi
  // Q_H - V_H - log pi(a|s): the conditional mean of the entropy TD residual
  // given (s, a). Also mean zero under pi; equals a_h wherever pi(.|s) is uniform.
  std::vector<double> a_h_action;
  std::vector<double> a_soft;  // a + tau a_h
  double j = 0.0;
};

OracleSolution oracle_advantages(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                                 const EstimatorConfig& cfg);

// Discounted state occupancy d(s) = sum_t gamma^t P(s_t = s), s nonterminal,
// s_0 ~ rho. gamma = 1 is allowed when every state drains into a terminal.
std::vector<double> discounted_occupancy(const DeterministicTabularMdp& mdp,
                                         const TabularPolicy& policy, double gamma);

// Which per-action entropy advantage multiplies grad log pi in the entropy term.
enum class EntropyAdvantageForm {
  // Q_H - V_H - log pi(a|s). This is the true gradient of the soft objective.
  kPerAction,
  // Q_H - V_H + H(pi(.|s)). Drops the gradient of the current state's policy
  // entropy; kept to measure that gap.
  kStateMean,
};

// Exact gradient of soft_objective with respect to tabular softmax logits:
//   sum_s d_V(s) sum_a pi A grad log pi + tau sum_s d_H(s) sum_a pi A_H grad log pi
// with d_V, d_H the gamma_v- and gamma_h-discounted occupancies and
// d log pi(a|s) / d logit(s,b) = 1[a=b] - pi(b|s).
std::vector<double> exact_soft_policy_gradient(
    const DeterministicTabularMdp& mdp, std::span<const double> logits,
    const EstimatorConfig& cfg, EntropyAdvantageForm form = EntropyAdvantageForm::kPerAction);

// The practical estimator's target: one occupancy (discount occupancy_gamma,
// 1 = undiscounted visitation) weighting the soft advantage
// A + tau (Q_H - V_H - log pi(a|s)).
std::vector<double> approximate_soft_policy_gradient(const DeterministicTabularMdp& mdp,
                                                     std::span<const double> logits,
                                                     const EstimatorConfig& cfg,
                                                     double occupancy_gamma = 1.0);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& objective,
    std::span<const double> point, double h);

// Central differences of soft_objective over the logits.
std::vector<double> finite_difference_gradient(const DeterministicTabularMdp& mdp,
                                               std::span<const double> logits,
                                               const EstimatorConfig& cfg, double h = 1e-5);

// Largest component error |x - y| / max(|y|, floor) over the two vectors.
double max_relative_error(std::span<const double> x, std::span<const double> reference,
                          double floor = 1e-8);

// CSV dump of every (s, a) row of the solution.
void write_oracle_csv(std::ostream& out, const DeterministicTabularMdp& mdp,
                      const TabularPolicy& policy, const OracleSolution& solution);

}  // namespace eapo
