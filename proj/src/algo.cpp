#include "eapo/algo.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include "eapo/error.hpp"

namespace eapo {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct NetSnapshot {
  std::vector<double> params;
  PopArtStats value_stats;
  PopArtStats entropy_stats;

  explicit NetSnapshot(const DualHeadNetwork& net)
      : params(net.params().begin(), net.params().end()),
        value_stats(net.value_stats),
        entropy_stats(net.entropy_stats) {}

  void restore(DualHeadNetwork& net) const {
    net.set_params(params);
    net.value_stats = value_stats;
    net.entropy_stats = entropy_stats;
  }
};

std::vector<double> gather_observations(const RolloutBuffer& buffer,
                                        std::span<const std::size_t> idx, int input_size) {
  const auto d = static_cast<std::size_t>(input_size);
  std::vector<double> obs(idx.size() * d);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::vector<double>& o = buffer.records[idx[k]].observation;
    if (o.size() != d) throw Error(ErrorCode::kShapeMismatch, "observation size differs from network input");
    std::copy(o.begin(), o.end(), obs.begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  return obs;
}

Minibatch gather_minibatch(const RolloutBuffer& buffer, std::span<const std::size_t> idx,
                           int input_size, const std::vector<double>& advantages,
                           const std::vector<double>& target_v_norm,
                           const std::vector<double>& target_h_norm) {
  Minibatch mb;
  mb.size = idx.size();
  mb.observations = gather_observations(buffer, idx, input_size);
  mb.actions.reserve(idx.size());
  mb.old_log_probs.reserve(idx.size());
  mb.advantages.reserve(idx.size());
  mb.target_v_norm.reserve(idx.size());
  for (std::size_t i : idx) {
    mb.actions.push_back(buffer.records[i].action);
    mb.old_log_probs.push_back(buffer.records[i].log_prob);
    mb.advantages.push_back(advantages[i]);
    mb.target_v_norm.push_back(target_v_norm[i]);
    if (!target_h_norm.empty()) mb.target_h_norm.push_back(target_h_norm[i]);
  }
  return mb;
}

// Updates PopArt statistics from raw targets, then returns normalized targets.
std::vector<double> normalized_targets(DualHeadNetwork& net, DualHeadNetwork::Head head,
                                       const std::vector<double>& targets, bool popart,
                                       bool* degenerate) {
  PopArtStats& stats = head == DualHeadNetwork::Head::kValue ? net.value_stats : net.entropy_stats;
  if (popart) {
    const PopArtUpdate u =
        popart_update_and_rescale(stats, net.head_weights(head), net.head_bias(head), targets);
    if (u.degenerate_sigma && degenerate != nullptr) *degenerate = true;
  }
  std::vector<double> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) out[i] = stats.normalize(targets[i]);
  return out;
}

void accumulate(UpdateDiagnostics& d, const MinibatchLoss& l, double grad_norm) {
  d.policy_loss += -l.policy_objective;
  d.value_loss += l.value_loss;
  d.entropy_loss += l.entropy_loss;
  d.approx_kl += l.approx_kl;
  d.clip_fraction += l.clip_fraction;
  d.mean_entropy += l.mean_entropy;
  d.grad_norm += grad_norm;
  d.minibatches += 1;
}

void finish(UpdateDiagnostics& d) {
  if (d.minibatches == 0) return;
  const double m = static_cast<double>(d.minibatches);
  d.policy_loss /= m;
  d.value_loss /= m;
  d.entropy_loss /= m;
  d.approx_kl /= m;
  d.clip_fraction /= m;
  d.mean_entropy /= m;
  d.grad_norm /= m;
}

// Shuffled minibatch SGD over the buffer with the given loss terms.
void run_epochs(DualHeadNetwork& net, AdamOptimizer& optimizer, const RolloutBuffer& buffer,
                const std::vector<double>& advantages, const std::vector<double>& target_v_norm,
                const std::vector<double>& target_h_norm, const EstimatorConfig& est,
                const LossTerms& terms, int epochs, int minibatch_size, double max_grad_norm,
                CounterRng& rng, UpdateDiagnostics& diag) {
  const std::size_t n = buffer.size();
  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(minibatch_size), n);
  std::vector<std::size_t> idx(n);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t count = std::min(mb, n - start);
      const Minibatch batch =
          gather_minibatch(buffer, std::span<const std::size_t>(idx).subspan(start, count),
                           net.config().input_size, advantages, target_v_norm, target_h_norm);
      MinibatchLoss loss = ppo_minibatch_loss(net, batch, est, terms);
      if (!std::isfinite(loss.loss) || !all_finite(loss.gradient)) {
        throw Error(ErrorCode::kNonFiniteLoss, "minibatch loss is not finite");
      }
      const double norm = clip_global_norm(loss.gradient, max_grad_norm);
      optimizer.step(net.params(), loss.gradient);
      accumulate(diag, loss, norm);
    }
  }
}

UpdateDiagnostics ppo_core(DualHeadNetwork& net, AdamOptimizer& optimizer,
                           const RolloutBuffer& buffer, const AdvantageBatch& batch,
                           const EstimatorConfig& est, const PpoUpdateConfig& cfg,
                           CounterRng& rng, bool train_entropy_head, double entropy_bonus) {
  UpdateDiagnostics diag;
  if (buffer.empty()) return diag;
  const NetSnapshot snapshot(net);
  try {
    const std::vector<double> tv = normalized_targets(net, DualHeadNetwork::Head::kValue,
                                                      batch.target_v, cfg.popart,
                                                      &diag.popart_degenerate);
    std::vector<double> th;
    if (train_entropy_head) {
      th = normalized_targets(net, DualHeadNetwork::Head::kEntropy, batch.target_h, cfg.popart,
                              &diag.popart_degenerate);
    }
    LossTerms terms;
    terms.entropy = train_entropy_head;
    terms.entropy_bonus = entropy_bonus;
    run_epochs(net, optimizer, buffer, batch.adv_soft, tv, th, est, terms, cfg.epochs,
               cfg.minibatch_size, cfg.max_grad_norm, rng, diag);
  } catch (...) {
    snapshot.restore(net);
    throw;
  }
  finish(diag);
  return diag;
}

// Row-wise log_softmax of an [n x a] logit table.
std::vector<double> log_prob_table(std::span<const double> logits, int num_actions) {
  const auto a = static_cast<std::size_t>(num_actions);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size() / a; ++i) {
    const std::vector<double> row = log_softmax(logits.subspan(i * a, a));
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(i * a));
  }
  return out;
}

}  // namespace

AlgoKind parse_algo(const std::string& name) {
  if (name == "eapo_ppo") return AlgoKind::kEapoPpo;
  if (name == "eapo_trpo") return AlgoKind::kEapoTrpo;
  if (name == "ppo_entbonus") return AlgoKind::kPpoEntropyBonus;
  if (name == "ppo_entreward") return AlgoKind::kPpoEntropyReward;
  throw Error(ErrorCode::kConfig, "unknown algo '" + name + "'");
}

const char* algo_name(AlgoKind kind) {
  switch (kind) {
    case AlgoKind::kEapoPpo: return "eapo_ppo";
    case AlgoKind::kEapoTrpo: return "eapo_trpo";
    case AlgoKind::kPpoEntropyBonus: return "ppo_entbonus";
    case AlgoKind::kPpoEntropyReward: return "ppo_entreward";
  }
  return "?";
}

void PpoUpdateConfig::validate() const {
  if (epochs <= 0 || minibatch_size <= 0 || !(max_grad_norm > 0.0) || !(learning_rate > 0.0) ||
      !(entropy_coef >= 0.0)) {
    throw Error(ErrorCode::kConfig, "ppo settings must be positive (entropy_coef >= 0)");
  }
}

void TrpoUpdateConfig::validate() const {
  if (!(kl_delta > 0.0)) throw Error(ErrorCode::kConfig, "kl_delta must be positive");
  if (cg_iters <= 0 || !(cg_damping >= 0.0) || !(backtrack_coeff > 0.0 && backtrack_coeff < 1.0) ||
      backtrack_steps <= 0 || !(accept_kl_factor >= 1.0) || critic_epochs <= 0 ||
      critic_minibatch_size <= 0 || !(critic_learning_rate > 0.0) || !(max_grad_norm > 0.0)) {
    throw Error(ErrorCode::kConfig, "invalid trpo settings");
  }
}

PolicyObjective ppo_policy_objective(std::span<const double> log_prob_new,
                                     std::span<const double> log_prob_old,
                                     std::span<const double> adv_soft, double clip_epsilon) {
  if (log_prob_new.size() != log_prob_old.size() || log_prob_new.size() != adv_soft.size()) {
    throw Error(ErrorCode::kShapeMismatch, "ppo objective inputs are misaligned");
  }
  PolicyObjective out;
  const std::size_t n = adv_soft.size();
  out.seed.assign(n, 0.0);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double clipped = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double log_ratio = log_prob_new[i] - log_prob_old[i];
    const double r = std::exp(log_ratio);
    if (!std::isfinite(r) || !std::isfinite(log_ratio)) {
      throw Error(ErrorCode::kNonFiniteRatio, "probability ratio is not finite");
    }
    const double a = adv_soft[i];
    const double unclipped = r * a;
    const double clipped_term = std::clamp(r, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
    const double term = std::min(unclipped, clipped_term);
    assert(term <= unclipped);
    out.objective += term;
    if (unclipped <= clipped_term) {
      out.seed[i] = unclipped * inv_n;
    } else {
      clipped += 1.0;
    }
    out.approx_kl += (r - 1.0) - log_ratio;
  }
  out.objective *= inv_n;
  out.approx_kl *= inv_n;
  out.clip_fraction = clipped * inv_n;
  return out;
}

MinibatchLoss ppo_minibatch_loss(const DualHeadNetwork& net, const Minibatch& batch,
                                 const EstimatorConfig& est, const LossTerms& terms) {
  const std::size_t m = batch.size;
  const int num_actions = net.config().num_actions;
  const auto a_count = static_cast<std::size_t>(num_actions);
  if (batch.actions.size() != m || batch.old_log_probs.size() != m ||
      batch.advantages.size() != m || (terms.value && batch.target_v_norm.size() != m) ||
      (terms.entropy && batch.target_h_norm.size() != m)) {
    throw Error(ErrorCode::kShapeMismatch, "minibatch fields have inconsistent lengths");
  }
  MinibatchLoss out;
  if (m == 0) {
    out.gradient.assign(net.num_params(), 0.0);
    return out;
  }
  const ForwardPass pass = net.forward_batch(batch.observations, m);
  const std::vector<double> log_probs = log_prob_table(pass.logits, num_actions);
  const double inv_m = 1.0 / static_cast<double>(m);

  OutputGradients grads;
  grads.logits.assign(m * a_count, 0.0);

  std::vector<double> lp_new(m);
  for (std::size_t i = 0; i < m; ++i) {
    const int a = batch.actions[i];
    if (a < 0 || a >= num_actions) throw Error(ErrorCode::kActionOutOfRange, "action out of range");
    lp_new[i] = log_probs[i * a_count + static_cast<std::size_t>(a)];
  }

  double entropy_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* lp = log_probs.data() + i * a_count;
    double h = 0.0;
    for (std::size_t b = 0; b < a_count; ++b) h -= std::exp(lp[b]) * lp[b];
    entropy_sum += h;
    if (terms.entropy_bonus != 0.0) {
      double* g = grads.logits.data() + i * a_count;
      const double w = terms.entropy_bonus * inv_m;
      for (std::size_t b = 0; b < a_count; ++b) g[b] += w * std::exp(lp[b]) * (lp[b] + h);
    }
  }
  out.mean_entropy = entropy_sum * inv_m;

  if (terms.policy) {
    const PolicyObjective obj =
        ppo_policy_objective(lp_new, batch.old_log_probs, batch.advantages, est.clip_epsilon);
    out.policy_objective = obj.objective;
    out.clip_fraction = obj.clip_fraction;
    out.approx_kl = obj.approx_kl;
    for (std::size_t i = 0; i < m; ++i) {
      if (obj.seed[i] == 0.0) continue;
      const double* lp = log_probs.data() + i * a_count;
      double* g = grads.logits.data() + i * a_count;
      const auto a = static_cast<std::size_t>(batch.actions[i]);
      for (std::size_t b = 0; b < a_count; ++b) {
        const double indicator = b == a ? 1.0 : 0.0;
        g[b] -= obj.seed[i] * (indicator - std::exp(lp[b]));
      }
    }
  }

  if (terms.value) {
    grads.value.resize(m);
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double diff = pass.value_norm[i] - batch.target_v_norm[i];
      ss += diff * diff;
      grads.value[i] = est.c1 * diff * inv_m;
    }
    out.value_loss = 0.5 * ss * inv_m;
  }
  if (terms.entropy) {
    grads.entropy.resize(m);
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double diff = pass.entropy_norm[i] - batch.target_h_norm[i];
      ss += diff * diff;
      grads.entropy[i] = est.c1 * est.c2 * diff * inv_m;
    }
    out.entropy_loss = 0.5 * ss * inv_m;
  }

  out.loss = -out.policy_objective + est.c1 * (out.value_loss + est.c2 * out.entropy_loss) -
             terms.entropy_bonus * out.mean_entropy;
  out.gradient = net.backward(pass, grads);
  return out;
}

UpdateDiagnostics eapo_ppo_update(DualHeadNetwork& net, AdamOptimizer& optimizer,
                                  const RolloutBuffer& buffer, const EstimatorConfig& est,
                                  const PpoUpdateConfig& cfg, CounterRng& shuffle_rng,
                                  PpoOptions options) {
  cfg.validate();
  const AdvantageBatch batch = estimate_batch(buffer, est);
  return ppo_core(net, optimizer, buffer, batch, est, cfg, shuffle_rng,
                  !options.detach_entropy_head, 0.0);
}

UpdateDiagnostics baseline_ppo_entropy_bonus(DualHeadNetwork& net, AdamOptimizer& optimizer,
                                             const RolloutBuffer& buffer,
                                             const EstimatorConfig& est,
                                             const PpoUpdateConfig& cfg,
                                             CounterRng& shuffle_rng) {
  cfg.validate();
  AdvantageBatch batch = estimate_batch(buffer, est);
  batch.adv_soft = batch.adv_v;
  if (est.normalize_advantage) normalize_advantages(batch.adv_soft);
  return ppo_core(net, optimizer, buffer, batch, est, cfg, shuffle_rng, false, cfg.entropy_coef);
}

UpdateDiagnostics baseline_entropy_reward_ppo(DualHeadNetwork& net, AdamOptimizer& optimizer,
                                              const RolloutBuffer& buffer,
                                              const EstimatorConfig& est,
                                              const PpoUpdateConfig& cfg,
                                              CounterRng& shuffle_rng) {
  cfg.validate();
  const AdvantageBatch batch = estimate_entropy_reward_batch(buffer, est);
  return ppo_core(net, optimizer, buffer, batch, est, cfg, shuffle_rng, false, 0.0);
}

double mean_kl(std::span<const double> log_probs_old, std::span<const double> log_probs_new,
               int num_actions) {
  if (log_probs_old.size() != log_probs_new.size() || num_actions <= 0) {
    throw Error(ErrorCode::kShapeMismatch, "kl tables differ in size");
  }
  const auto a = static_cast<std::size_t>(num_actions);
  const std::size_t rows = log_probs_old.size() / a;
  if (rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t b = 0; b < a; ++b) {
      const double lo = log_probs_old[i * a + b];
      total += std::exp(lo) * (lo - log_probs_new[i * a + b]);
    }
  }
  return total / static_cast<double>(rows);
}

std::vector<double> conjugate_gradient(
    const std::function<std::vector<double>(std::span<const double>)>& apply,
    std::span<const double> b, int iterations, double* residual_norm, double tolerance) {
  std::vector<double> x(b.size(), 0.0);
  std::vector<double> r(b.begin(), b.end());
  std::vector<double> p = r;
  double rr = dot(r, r);
  for (int it = 0; it < iterations && std::sqrt(rr) > tolerance; ++it) {
    const std::vector<double> ap = apply(p);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  if (residual_norm != nullptr) *residual_norm = std::sqrt(rr);
  return x;
}

std::vector<double> fisher_vector_product(const DualHeadNetwork& net, const ForwardPass& pass,
                                          std::span<const double> probs,
                                          std::span<const double> v, double damping) {
  const auto a = static_cast<std::size_t>(net.config().num_actions);
  const std::vector<double> jv = net.logits_jvp(pass, v);
  if (probs.size() != jv.size()) throw Error(ErrorCode::kShapeMismatch, "probability table size");
  const double inv_n = 1.0 / static_cast<double>(pass.batch);
  OutputGradients grads;
  grads.logits.resize(jv.size());
  for (std::size_t i = 0; i < pass.batch; ++i) {
    const double* p = probs.data() + i * a;
    const double* j = jv.data() + i * a;
    double mean = 0.0;
    for (std::size_t b = 0; b < a; ++b) mean += p[b] * j[b];
    for (std::size_t b = 0; b < a; ++b) grads.logits[i * a + b] = p[b] * (j[b] - mean) * inv_n;
  }
  std::vector<double> out = net.backward(pass, grads);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += damping * v[k];
  return out;
}

UpdateDiagnostics eapo_trpo_update(DualHeadNetwork& net, AdamOptimizer& critic_optimizer,
                                   const RolloutBuffer& buffer, const EstimatorConfig& est,
                                   const TrpoUpdateConfig& cfg, CounterRng& shuffle_rng) {
  cfg.validate();
  UpdateDiagnostics diag;
  if (buffer.empty()) return diag;
  const AdvantageBatch batch = estimate_batch(buffer, est);
  const NetSnapshot snapshot(net);
  try {
    const std::vector<double> tv = normalized_targets(net, DualHeadNetwork::Head::kValue,
                                                      batch.target_v, cfg.popart,
                                                      &diag.popart_degenerate);
    const std::vector<double> th = normalized_targets(net, DualHeadNetwork::Head::kEntropy,
                                                      batch.target_h, cfg.popart,
                                                      &diag.popart_degenerate);

    const std::size_t n = buffer.size();
    const int num_actions = net.config().num_actions;
    const auto a_count = static_cast<std::size_t>(num_actions);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const std::vector<double> obs = gather_observations(buffer, all, net.config().input_size);
    const ForwardPass pass = net.forward_batch(obs, n);
    const std::vector<double> old_table = log_prob_table(pass.logits, num_actions);
    std::vector<double> probs(old_table.size());
    for (std::size_t k = 0; k < probs.size(); ++k) probs[k] = std::exp(old_table[k]);
    std::vector<double> lp_old(n);
    double entropy_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      lp_old[i] = old_table[i * a_count + static_cast<std::size_t>(buffer.records[i].action)];
      for (std::size_t b = 0; b < a_count; ++b) {
        entropy_sum -= probs[i * a_count + b] * old_table[i * a_count + b];
      }
    }
    diag.mean_entropy = entropy_sum / static_cast<double>(n);
    const std::vector<double>& adv = batch.adv_soft;
    const double inv_n = 1.0 / static_cast<double>(n);
    const double surrogate_old = std::accumulate(adv.begin(), adv.end(), 0.0) * inv_n;

    OutputGradients seed;
    seed.logits.assign(n * a_count, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::size_t>(buffer.records[i].action);
      for (std::size_t b = 0; b < a_count; ++b) {
        seed.logits[i * a_count + b] =
            adv[i] * inv_n * ((b == a ? 1.0 : 0.0) - probs[i * a_count + b]);
      }
    }
    const std::vector<double> g = net.backward(pass, seed);
    const double g_norm = std::sqrt(dot(g, g));
    diag.grad_norm = g_norm;
    diag.policy_loss = -surrogate_old;

    if (g_norm > 0.0 && std::isfinite(g_norm)) {
      auto fvp = [&](std::span<const double> v) {
        return fisher_vector_product(net, pass, probs, v, cfg.cg_damping);
      };
      const std::vector<double> x = conjugate_gradient(fvp, g, cfg.cg_iters, &diag.cg_residual);
      const double xfx = dot(x, fvp(x));
      if (xfx > 0.0 && std::isfinite(xfx)) {
        const double scale = std::sqrt(2.0 * cfg.kl_delta / xfx);
        const std::vector<double> theta_old(net.params().begin(), net.params().end());
        std::span<double> params = net.params();
        double fraction = 1.0;
        for (int k = 0; k < cfg.backtrack_steps; ++k, fraction *= cfg.backtrack_coeff) {
          for (std::size_t i = 0; i < params.size(); ++i) {
            params[i] = theta_old[i] + fraction * scale * x[i];
          }
          const ForwardPass trial = net.forward_batch(obs, n);
          const std::vector<double> new_table = log_prob_table(trial.logits, num_actions);
          const double kl = mean_kl(old_table, new_table, num_actions);
          double surrogate = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double lp =
                new_table[i * a_count + static_cast<std::size_t>(buffer.records[i].action)];
            surrogate += std::exp(lp - lp_old[i]) * adv[i];
          }
          surrogate *= inv_n;
          if (std::isfinite(kl) && std::isfinite(surrogate) &&
              kl <= cfg.accept_kl_factor * cfg.kl_delta && surrogate - surrogate_old >= 0.0) {
            diag.step_accepted = true;
            diag.backtracks = k;
            diag.step_kl = kl;
            diag.surrogate_gain = surrogate - surrogate_old;
            diag.policy_loss = -surrogate;
            break;
          }
        }
        if (!diag.step_accepted) net.set_params(theta_old);
      }
    }

    LossTerms terms;
    terms.policy = false;
    UpdateDiagnostics critic;
    run_epochs(net, critic_optimizer, buffer, adv, tv, th, est, terms, cfg.critic_epochs,
               cfg.critic_minibatch_size, cfg.max_grad_norm, shuffle_rng, critic);
    finish(critic);
    diag.value_loss = critic.value_loss;
    diag.entropy_loss = critic.entropy_loss;
    diag.minibatches = critic.minibatches;

    const ForwardPass after = net.forward_batch(obs, n);
    diag.final_kl = mean_kl(old_table, log_prob_table(after.logits, num_actions), num_actions);
    diag.approx_kl = diag.final_kl;
  } catch (...) {
    snapshot.restore(net);
    throw;
  }
  return diag;
}

}  // namespace eapo
