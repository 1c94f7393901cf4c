#include "eapo/estimation.hpp"

#include <cmath>

#include "eapo/error.hpp"

namespace eapo {

namespace {

void require_equal(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": lengths " + std::to_string(a) +
                                               " and " + std::to_string(b) + " differ");
  }
}

struct StreamInput {
  std::vector<double> rewards;
  std::vector<double> predictions;
  std::vector<double> bootstraps;  // per fragment
};

// Residuals of one stream. The successor value of a record is the next
// record's prediction inside a slice, the fragment bootstrap at a slice that
// ends without termination, and zero after termination.
std::vector<double> stream_residuals(const std::vector<EpisodeSlice>& slices,
                                     const StreamInput& in, double gamma) {
  std::vector<double> delta(in.rewards.size());
  for (const EpisodeSlice& slice : slices) {
    for (std::size_t t = slice.first; t <= slice.last; ++t) {
      double v_next = 0.0;
      TerminalKind kind = TerminalKind::kNone;
      if (t < slice.last) {
        v_next = in.predictions[t + 1];
      } else {
        kind = slice.kind;
        if (kind != TerminalKind::kTerminated) v_next = in.bootstraps[slice.fragment];
      }
      delta[t] = in.rewards[t] + gamma * (kind == TerminalKind::kTerminated ? 0.0 : v_next) -
                 in.predictions[t];
    }
  }
  return delta;
}

std::vector<double> fragment_bootstraps(const RolloutBuffer& buffer, bool entropy) {
  std::vector<double> out;
  if (buffer.fragments.empty()) {
    out.push_back(0.0);
    return out;
  }
  for (const Fragment& f : buffer.fragments) {
    out.push_back(entropy ? f.bootstrap_entropy_value : f.bootstrap_value);
  }
  return out;
}

}  // namespace

double value_td_residual(double reward, double v_s, double v_next, TerminalKind kind,
                         double gamma_v) {
  const double v_bar = kind == TerminalKind::kTerminated ? 0.0 : v_next;
  return reward + gamma_v * v_bar - v_s;
}

double entropy_td_residual(double log_prob, double v_h_s, double v_h_next, TerminalKind kind,
                           double gamma_h) {
  const double v_bar = kind == TerminalKind::kTerminated ? 0.0 : v_h_next;
  return -log_prob + gamma_h * v_bar - v_h_s;
}

std::vector<double> gae(std::span<const double> residuals, std::span<const EpisodeSlice> slices,
                        double gamma, double lambda) {
  std::size_t expected = 0;
  for (const EpisodeSlice& s : slices) {
    if (s.first != expected || s.last < s.first || s.last >= residuals.size()) {
      throw Error(ErrorCode::kSliceMismatch, "episode slices do not tile the residuals");
    }
    expected = s.last + 1;
  }
  if (expected != residuals.size()) {
    throw Error(ErrorCode::kSliceMismatch, "episode slices do not cover every residual");
  }
  std::vector<double> adv(residuals.size());
  const double decay = gamma * lambda;
  for (const EpisodeSlice& s : slices) {
    double running = 0.0;
    for (std::size_t t = s.last + 1; t-- > s.first;) {
      running = t == s.last ? residuals[t] : residuals[t] + decay * running;
      adv[t] = running;
    }
  }
  return adv;
}

std::vector<double> critic_targets(std::span<const double> advantages,
                                   std::span<const double> predictions) {
  require_equal(advantages.size(), predictions.size(), "critic_targets");
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = advantages[i] + predictions[i];
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= n;
  double ss = 0.0;
  for (double a : adv) ss += (a - mean) * (a - mean);
  const double sd = adv.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

std::vector<double> combine_soft_advantage(std::span<const double> adv_v,
                                           std::span<const double> adv_h, double tau,
                                           bool normalize) {
  require_equal(adv_v.size(), adv_h.size(), "combine_soft_advantage");
  std::vector<double> out(adv_v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = adv_v[i] + tau * adv_h[i];
  if (normalize) normalize_advantages(out);
  return out;
}

AdvantageBatch estimate_batch(const RolloutBuffer& buffer, const EstimatorConfig& cfg) {
  AdvantageBatch batch;
  if (buffer.empty()) return batch;
  validate_buffer(buffer);
  const std::vector<EpisodeSlice> slices = episode_slices(buffer);
  const std::size_t n = buffer.size();

  StreamInput value;
  StreamInput entropy;
  value.rewards.resize(n);
  value.predictions.resize(n);
  entropy.rewards.resize(n);
  entropy.predictions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const StepRecord& r = buffer.records[i];
    value.rewards[i] = r.reward;
    value.predictions[i] = r.value_pred;
    entropy.rewards[i] = -r.log_prob;
    entropy.predictions[i] = r.entropy_value_pred;
  }
  value.bootstraps = fragment_bootstraps(buffer, false);
  entropy.bootstraps = fragment_bootstraps(buffer, true);

  batch.delta_v = stream_residuals(slices, value, cfg.gamma_v);
  batch.delta_h = stream_residuals(slices, entropy, cfg.gamma_h);
  batch.adv_v = gae(batch.delta_v, slices, cfg.gamma_v, cfg.lambda_v);
  batch.adv_h = gae(batch.delta_h, slices, cfg.gamma_h, cfg.lambda_h);
  batch.target_v = critic_targets(batch.adv_v, value.predictions);
  batch.target_h = critic_targets(batch.adv_h, entropy.predictions);
  batch.adv_soft = combine_soft_advantage(batch.adv_v, batch.adv_h, cfg.tau,
                                          cfg.normalize_advantage);
  return batch;
}

AdvantageBatch estimate_entropy_reward_batch(const RolloutBuffer& buffer,
                                             const EstimatorConfig& cfg) {
  AdvantageBatch batch;
  if (buffer.empty()) return batch;
  validate_buffer(buffer);
  const std::vector<EpisodeSlice> slices = episode_slices(buffer);
  const std::size_t n = buffer.size();

  StreamInput value;
  value.rewards.resize(n);
  value.predictions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const StepRecord& r = buffer.records[i];
    value.rewards[i] = r.reward - cfg.tau * r.log_prob;
    value.predictions[i] = r.value_pred;
  }
  value.bootstraps = fragment_bootstraps(buffer, false);

  batch.delta_v = stream_residuals(slices, value, cfg.gamma_v);
  batch.adv_v = gae(batch.delta_v, slices, cfg.gamma_v, cfg.lambda_v);
  batch.target_v = critic_targets(batch.adv_v, value.predictions);
  batch.delta_h.assign(n, 0.0);
  batch.adv_h.assign(n, 0.0);
  batch.target_h.assign(n, 0.0);
  batch.adv_soft = batch.adv_v;
  if (cfg.normalize_advantage) normalize_advantages(batch.adv_soft);
  return batch;
}

}  // namespace eapo
