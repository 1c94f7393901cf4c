#include "eapo/oracle.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "eapo/error.hpp"

namespace eapo {

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

std::vector<double> row_softmax(int num_states, int num_actions, std::span<const double> logits) {
  std::vector<double> probs(logits.size());
  const auto na = static_cast<std::size_t>(num_actions);
  for (std::size_t s = 0; s < static_cast<std::size_t>(num_states); ++s) {
    const double* row = logits.data() + s * na;
    const double m = *std::max_element(row, row + na);
    double z = 0.0;
    for (std::size_t a = 0; a < na; ++a) z += std::exp(row[a] - m);
    for (std::size_t a = 0; a < na; ++a) probs[s * na + a] = std::exp(row[a] - m) / z;
  }
  return probs;
}

// Nonterminal states get consecutive indices; terminal states map to -1.
std::vector<int> nonterminal_index(const DeterministicTabularMdp& mdp, int& count) {
  std::vector<int> index(static_cast<std::size_t>(mdp.num_states), -1);
  count = 0;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (!mdp.is_terminal(s)) index[static_cast<std::size_t>(s)] = count++;
  }
  return index;
}

// With gamma = 1 the restricted system I - P_pi is invertible exactly when
// every nonterminal state reaches a terminal state under pi's support.
void require_absorbing(const DeterministicTabularMdp& mdp, const TabularPolicy& policy) {
  std::vector<std::vector<int>> predecessors(static_cast<std::size_t>(mdp.num_states));
  for (int s = 0; s < mdp.num_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.num_actions; ++a) {
      if (policy.prob(s, a) > 0.0) {
        predecessors[static_cast<std::size_t>(mdp.next_state(s, a))].push_back(s);
      }
    }
  }
  std::vector<char> drains(static_cast<std::size_t>(mdp.num_states), 0);
  std::deque<int> frontier;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (mdp.is_terminal(s)) {
      drains[static_cast<std::size_t>(s)] = 1;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    for (int p : predecessors[static_cast<std::size_t>(s)]) {
      if (!drains[static_cast<std::size_t>(p)]) {
        drains[static_cast<std::size_t>(p)] = 1;
        frontier.push_back(p);
      }
    }
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    if (!drains[static_cast<std::size_t>(s)]) {
      throw Error(ErrorCode::kSingularSystem,
                  "undiscounted system is singular: state " + std::to_string(s) +
                      " never reaches a terminal state");
    }
  }
}

// Builds I - gamma P_pi over nonterminal states (transposed when requested).
SparseMatrix evaluation_matrix(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                               double gamma, const std::vector<int>& index, int n,
                               bool transpose) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * (static_cast<std::size_t>(mdp.num_actions) + 1));
  for (int s = 0; s < mdp.num_states; ++s) {
    const int i = index[static_cast<std::size_t>(s)];
    if (i < 0) continue;
    triplets.emplace_back(i, i, 1.0);
    for (int a = 0; a < mdp.num_actions; ++a) {
      const double p = policy.prob(s, a);
      if (p == 0.0) continue;
      const int j = index[static_cast<std::size_t>(mdp.next_state(s, a))];
      if (j < 0) continue;
      if (transpose) {
        triplets.emplace_back(j, i, -gamma * p);
      } else {
        triplets.emplace_back(i, j, -gamma * p);
      }
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

Eigen::VectorXd sparse_solve(const SparseMatrix& m, const Eigen::VectorXd& rhs) {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularSystem, "sparse LU factorization failed");
  }
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite()) {
    throw Error(ErrorCode::kSingularSystem, "sparse LU solve failed");
  }
  return x;
}

// Solves V = r_pi + gamma P_pi V with V = 0 at terminal states.
std::vector<double> evaluate(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                             double gamma, const std::vector<double>& per_state_reward) {
  if (gamma >= 1.0) require_absorbing(mdp, policy);
  int n = 0;
  const std::vector<int> index = nonterminal_index(mdp, n);
  std::vector<double> v(static_cast<std::size_t>(mdp.num_states), 0.0);
  if (n == 0) return v;
  Eigen::VectorXd rhs(n);
  for (int s = 0; s < mdp.num_states; ++s) {
    const int i = index[static_cast<std::size_t>(s)];
    if (i >= 0) rhs[i] = per_state_reward[static_cast<std::size_t>(s)];
  }
  const Eigen::VectorXd x = sparse_solve(evaluation_matrix(mdp, policy, gamma, index, n, false), rhs);
  for (int s = 0; s < mdp.num_states; ++s) {
    const int i = index[static_cast<std::size_t>(s)];
    if (i >= 0) v[static_cast<std::size_t>(s)] = x[i];
  }
  return v;
}

double log_prob_or_neg_inf(double p) {
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

void check_logits(const DeterministicTabularMdp& mdp, std::span<const double> logits) {
  if (logits.size() != mdp.transition.size()) {
    throw Error(ErrorCode::kShapeMismatch, "logit table does not match the MDP");
  }
}

}  // namespace

TabularPolicy TabularPolicy::uniform(int num_states, int num_actions) {
  TabularPolicy policy;
  policy.num_states = num_states;
  policy.num_actions = num_actions;
  policy.probs.assign(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions),
                      1.0 / static_cast<double>(num_actions));
  return policy;
}

TabularPolicy TabularPolicy::from_logits(int num_states, int num_actions,
                                         std::vector<double> logits) {
  if (logits.size() !=
      static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions)) {
    throw Error(ErrorCode::kShapeMismatch, "logit table has the wrong size");
  }
  TabularPolicy policy;
  policy.num_states = num_states;
  policy.num_actions = num_actions;
  policy.probs = row_softmax(num_states, num_actions, logits);
  policy.logits = std::move(logits);
  return policy;
}

TabularPolicy TabularPolicy::deterministic(int num_actions, const std::vector<int>& actions) {
  TabularPolicy policy;
  policy.num_states = static_cast<int>(actions.size());
  policy.num_actions = num_actions;
  policy.probs.assign(actions.size() * static_cast<std::size_t>(num_actions), 0.0);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    policy.probs[s * static_cast<std::size_t>(num_actions) + static_cast<std::size_t>(actions[s])] = 1.0;
  }
  return policy;
}

void validate_policy(const TabularPolicy& policy, const DeterministicTabularMdp& mdp) {
  if (policy.num_states != mdp.num_states || policy.num_actions != mdp.num_actions ||
      policy.probs.size() != mdp.transition.size()) {
    throw Error(ErrorCode::kShapeMismatch, "policy does not match the MDP");
  }
  for (int s = 0; s < policy.num_states; ++s) {
    double total = 0.0;
    for (int a = 0; a < policy.num_actions; ++a) {
      const double p = policy.prob(s, a);
      if (!(p >= 0.0)) throw Error(ErrorCode::kBadDistribution, "negative policy probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw Error(ErrorCode::kBadDistribution,
                  "policy row " + std::to_string(s) + " does not sum to 1");
    }
  }
  if (policy.logits) {
    const auto expected = row_softmax(policy.num_states, policy.num_actions, *policy.logits);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (std::abs(expected[i] - policy.probs[i]) > 1e-12) {
        throw Error(ErrorCode::kBadDistribution, "probs differ from softmax(logits)");
      }
    }
  }
}

TabularPolicy read_policy_text(std::istream& in) {
  std::string line;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      const auto pos = line.find_first_not_of(" \t\r");
      if (pos != std::string::npos && line[pos] != '#') return true;
    }
    return false;
  };
  if (!next_line()) throw Error(ErrorCode::kParse, "empty policy file");
  std::istringstream header(line);
  std::string kind;
  int s = 0;
  int a = 0;
  if (!(header >> kind >> s >> a) || (kind != "probs" && kind != "logits") || s <= 0 || a <= 0) {
    throw Error(ErrorCode::kParse, "policy header must be 'probs S A' or 'logits S A'");
  }
  std::vector<double> table;
  for (int row = 0; row < s; ++row) {
    if (!next_line()) throw Error(ErrorCode::kParse, "truncated policy table");
    std::istringstream values(line);
    for (int col = 0; col < a; ++col) {
      double x = 0.0;
      if (!(values >> x)) throw Error(ErrorCode::kParse, "bad policy row: '" + line + "'");
      table.push_back(x);
    }
  }
  if (kind == "logits") return TabularPolicy::from_logits(s, a, std::move(table));
  TabularPolicy policy;
  policy.num_states = s;
  policy.num_actions = a;
  policy.probs = std::move(table);
  return policy;
}

TabularPolicy load_policy_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_policy_text(in);
}

double state_entropy(const TabularPolicy& policy, int s) {
  double h = 0.0;
  for (int a = 0; a < policy.num_actions; ++a) {
    const double p = policy.prob(s, a);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

ValueSolution solve_value(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                          double gamma_v) {
  std::vector<double> expected_reward(static_cast<std::size_t>(mdp.num_states), 0.0);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      expected_reward[static_cast<std::size_t>(s)] += policy.prob(s, a) * mdp.reward_of(s, a);
    }
  }
  ValueSolution out;
  out.v = evaluate(mdp, policy, gamma_v, expected_reward);
  out.q.resize(mdp.transition.size());
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      out.q[mdp.index(s, a)] =
          mdp.is_terminal(s)
              ? 0.0
              : mdp.reward_of(s, a) +
                    gamma_v * out.v[static_cast<std::size_t>(mdp.next_state(s, a))];
    }
  }
  return out;
}

ValueSolution solve_entropy_value(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                                  double gamma_h) {
  std::vector<double> entropy(static_cast<std::size_t>(mdp.num_states), 0.0);
  for (int s = 0; s < mdp.num_states; ++s) entropy[static_cast<std::size_t>(s)] = state_entropy(policy, s);
  ValueSolution out;
  out.v = evaluate(mdp, policy, gamma_h, entropy);
  out.q.resize(mdp.transition.size());
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      out.q[mdp.index(s, a)] =
          mdp.is_terminal(s) ? 0.0
                             : gamma_h * out.v[static_cast<std::size_t>(mdp.next_state(s, a))];
    }
  }
  return out;
}

double soft_objective(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                      const EstimatorConfig& cfg) {
  const ValueSolution value = solve_value(mdp, policy, cfg.gamma_v);
  std::vector<double> v_h(static_cast<std::size_t>(mdp.num_states), 0.0);
  if (cfg.tau != 0.0) v_h = solve_entropy_value(mdp, policy, cfg.gamma_h).v;
  double j = 0.0;
  for (int s = 0; s < mdp.num_states; ++s) {
    const auto su = static_cast<std::size_t>(s);
    j += mdp.initial_distribution[su] * (value.v[su] + cfg.tau * v_h[su]);
  }
  return j;
}

OracleSolution oracle_advantages(const DeterministicTabularMdp& mdp, const TabularPolicy& policy,
                                 const EstimatorConfig& cfg) {
  validate_policy(policy, mdp);
  ValueSolution value = solve_value(mdp, policy, cfg.gamma_v);
  ValueSolution entropy_value = solve_entropy_value(mdp, policy, cfg.gamma_h);
  OracleSolution out;
  out.v = std::move(value.v);
  out.q = std::move(value.q);
  out.v_h = std::move(entropy_value.v);
  out.q_h = std::move(entropy_value.q);
  out.entropy.resize(static_cast<std::size_t>(mdp.num_states));
  const std::size_t cells = mdp.transition.size();
  out.a.assign(cells, 0.0);
  out.a_h.assign(cells, 0.0);
  out.a_h_action.assign(cells, 0.0);
  out.a_soft.assign(cells, 0.0);
  for (int s = 0; s < mdp.num_states; ++s) {
    const auto su = static_cast<std::size_t>(s);
    out.entropy[su] = state_entropy(policy, s);
    if (mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.num_actions; ++a) {
      const std::size_t i = mdp.index(s, a);
      out.a[i] = out.q[i] - out.v[su];
      out.a_h[i] = out.q_h[i] - out.v_h[su] + out.entropy[su];
      out.a_h_action[i] = out.q_h[i] - out.v_h[su] - log_prob_or_neg_inf(policy.prob(s, a));
      out.a_soft[i] = out.a[i] + cfg.tau * out.a_h[i];
    }
    out.j += mdp.initial_distribution[su] * (out.v[su] + cfg.tau * out.v_h[su]);
  }
  return out;
}

std::vector<double> discounted_occupancy(const DeterministicTabularMdp& mdp,
                                         const TabularPolicy& policy, double gamma) {
  if (gamma >= 1.0) require_absorbing(mdp, policy);
  int n = 0;
  const std::vector<int> index = nonterminal_index(mdp, n);
  std::vector<double> d(static_cast<std::size_t>(mdp.num_states), 0.0);
  if (n == 0) return d;
  Eigen::VectorXd rhs(n);
  for (int s = 0; s < mdp.num_states; ++s) {
    const int i = index[static_cast<std::size_t>(s)];
    if (i >= 0) rhs[i] = mdp.initial_distribution[static_cast<std::size_t>(s)];
  }
  const Eigen::VectorXd x = sparse_solve(evaluation_matrix(mdp, policy, gamma, index, n, true), rhs);
  for (int s = 0; s < mdp.num_states; ++s) {
    const int i = index[static_cast<std::size_t>(s)];
    if (i >= 0) d[static_cast<std::size_t>(s)] = x[i];
  }
  return d;
}

namespace {

// grad[s, b] += weight * pi(b|s) (x(s,b) - sum_a pi(a|s) x(s,a)).
void accumulate_score_term(const DeterministicTabularMdp& mdp, const TabularPolicy& policy, int s,
                           double weight, const std::vector<double>& x,
                           std::vector<double>& grad) {
  if (weight == 0.0) return;
  double mean = 0.0;
  for (int a = 0; a < mdp.num_actions; ++a) mean += policy.prob(s, a) * x[mdp.index(s, a)];
  for (int b = 0; b < mdp.num_actions; ++b) {
    grad[mdp.index(s, b)] += weight * policy.prob(s, b) * (x[mdp.index(s, b)] - mean);
  }
}

}  // namespace

std::vector<double> exact_soft_policy_gradient(const DeterministicTabularMdp& mdp,
                                               std::span<const double> logits,
                                               const EstimatorConfig& cfg,
                                               EntropyAdvantageForm form) {
  check_logits(mdp, logits);
  const TabularPolicy policy = TabularPolicy::from_logits(
      mdp.num_states, mdp.num_actions, std::vector<double>(logits.begin(), logits.end()));
  const OracleSolution sol = oracle_advantages(mdp, policy, cfg);
  const std::vector<double> d_v = discounted_occupancy(mdp, policy, cfg.gamma_v);
  std::vector<double> d_h(static_cast<std::size_t>(mdp.num_states), 0.0);
  if (cfg.tau != 0.0) d_h = discounted_occupancy(mdp, policy, cfg.gamma_h);
  const std::vector<double>& entropy_adv =
      form == EntropyAdvantageForm::kPerAction ? sol.a_h_action : sol.a_h;
  std::vector<double> grad(mdp.transition.size(), 0.0);
  for (int s = 0; s < mdp.num_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    const auto su = static_cast<std::size_t>(s);
    accumulate_score_term(mdp, policy, s, d_v[su], sol.a, grad);
    accumulate_score_term(mdp, policy, s, cfg.tau * d_h[su], entropy_adv, grad);
  }
  return grad;
}

std::vector<double> approximate_soft_policy_gradient(const DeterministicTabularMdp& mdp,
                                                     std::span<const double> logits,
                                                     const EstimatorConfig& cfg,
                                                     double occupancy_gamma) {
  check_logits(mdp, logits);
  const TabularPolicy policy = TabularPolicy::from_logits(
      mdp.num_states, mdp.num_actions, std::vector<double>(logits.begin(), logits.end()));
  const OracleSolution sol = oracle_advantages(mdp, policy, cfg);
  const std::vector<double> d = discounted_occupancy(mdp, policy, occupancy_gamma);
  std::vector<double> soft(mdp.transition.size());
  for (std::size_t i = 0; i < soft.size(); ++i) soft[i] = sol.a[i] + cfg.tau * sol.a_h_action[i];
  std::vector<double> grad(mdp.transition.size(), 0.0);
  for (int s = 0; s < mdp.num_states; ++s) {
    if (mdp.is_terminal(s)) continue;
    accumulate_score_term(mdp, policy, s, d[static_cast<std::size_t>(s)], soft, grad);
  }
  return grad;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& objective,
    std::span<const double> point, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = objective(x);
    x[i] = saved - h;
    const double minus = objective(x);
    x[i] = saved;
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

std::vector<double> finite_difference_gradient(const DeterministicTabularMdp& mdp,
                                               std::span<const double> logits,
                                               const EstimatorConfig& cfg, double h) {
  check_logits(mdp, logits);
  return finite_difference_gradient(
      [&](std::span<const double> theta) {
        return soft_objective(mdp,
                              TabularPolicy::from_logits(mdp.num_states, mdp.num_actions,
                                                         std::vector<double>(theta.begin(), theta.end())),
                              cfg);
      },
      logits, h);
}

double max_relative_error(std::span<const double> x, std::span<const double> reference,
                          double floor) {
  if (x.size() != reference.size()) throw Error(ErrorCode::kShapeMismatch, "length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double err = std::abs(x[i] - reference[i]) / std::max(std::abs(reference[i]), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

void write_oracle_csv(std::ostream& out, const DeterministicTabularMdp& mdp,
                      const TabularPolicy& policy, const OracleSolution& solution) {
  out << std::setprecision(17);
  out << "# j=" << solution.j << '\n';
  out << "state,action,prob,v,v_h,entropy,q,q_h,a,a_h,a_h_action,a_soft\n";
  for (int s = 0; s < mdp.num_states; ++s) {
    const auto su = static_cast<std::size_t>(s);
    for (int a = 0; a < mdp.num_actions; ++a) {
      const std::size_t i = mdp.index(s, a);
      out << s << ',' << a << ',' << policy.prob(s, a) << ',' << solution.v[su] << ','
          << solution.v_h[su] << ',' << solution.entropy[su] << ',' << solution.q[i] << ','
          << solution.q_h[i] << ',' << solution.a[i] << ',' << solution.a_h[i] << ','
          << solution.a_h_action[i] << ',' << solution.a_soft[i] << '\n';
    }
  }
}

}  // namespace eapo
