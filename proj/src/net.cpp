#include "eapo/net.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "eapo/error.hpp"

namespace eapo {

namespace {

// out[b, o] = bias[o] + sum_i W[o, i] in[b, i]
void dense_forward(const double* in, std::size_t batch, const LayerSpec& layer,
                   const double* params, double* out) {
  const auto n_in = static_cast<std::size_t>(layer.in);
  const auto n_out = static_cast<std::size_t>(layer.out);
  const double* w = params + layer.weight_offset;
  const double* bias = params + layer.bias_offset;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = in + b * n_in;
    double* y = out + b * n_out;
    for (std::size_t o = 0; o < n_out; ++o) {
      const double* row = w + o * n_in;
      double sum = 0.0;
      for (std::size_t i = 0; i < n_in; ++i) sum += row[i] * x[i];
      y[o] = bias[o] + sum;
    }
  }
}

// Accumulates parameter gradients of one dense layer and, when din is given,
// the gradient with respect to its input.
void dense_backward(const double* in, std::size_t batch, const LayerSpec& layer,
                    const double* params, const double* dout, double* grad, double* din) {
  const auto n_in = static_cast<std::size_t>(layer.in);
  const auto n_out = static_cast<std::size_t>(layer.out);
  const double* w = params + layer.weight_offset;
  double* gw = grad + layer.weight_offset;
  double* gb = grad + layer.bias_offset;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = in + b * n_in;
    double* dx = din != nullptr ? din + b * n_in : nullptr;
    for (std::size_t o = 0; o < n_out; ++o) {
      const double d = dout[b * n_out + o];
      gb[o] += d;
      double* grow = gw + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) grow[i] += d * x[i];
      if (dx != nullptr) {
        const double* row = w + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) dx[i] += d * row[i];
      }
    }
  }
}

// Directional derivative of a dense layer's output:
// out_dot = dW in + W in_dot + db (in_dot may be null for a constant input).
void dense_jvp(const double* in, const double* in_dot, std::size_t batch, const LayerSpec& layer,
               const double* params, const double* direction, double* out_dot) {
  const auto n_in = static_cast<std::size_t>(layer.in);
  const auto n_out = static_cast<std::size_t>(layer.out);
  const double* w = params + layer.weight_offset;
  const double* dw = direction + layer.weight_offset;
  const double* db = direction + layer.bias_offset;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = in + b * n_in;
    const double* xd = in_dot != nullptr ? in_dot + b * n_in : nullptr;
    for (std::size_t o = 0; o < n_out; ++o) {
      double sum = db[o];
      const double* drow = dw + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) sum += drow[i] * x[i];
      if (xd != nullptr) {
        const double* row = w + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) sum += row[i] * xd[i];
      }
      out_dot[b * n_out + o] = sum;
    }
  }
}

// Orthogonal [rows x cols] block scaled by gain, row-major.
void orthogonal_fill(CounterRng& rng, int rows, int cols, double gain, double* out) {
  const bool transpose = rows < cols;
  const int r = transpose ? cols : rows;
  const int c = transpose ? rows : cols;
  Eigen::MatrixXd gaussian(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) gaussian(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd upper = qr.matrixQR().topLeftCorner(c, c);
  for (int j = 0; j < c; ++j) {
    if (upper(j, j) < 0.0) q.col(j) *= -1.0;
  }
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double value = transpose ? q(j, i) : q(i, j);
      out[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)] =
          gain * value;
    }
  }
}

void check_finite_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": expected " +
                                               std::to_string(want) + " values, got " +
                                               std::to_string(got));
  }
}

}  // namespace

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - m);
  const double log_z = m + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
  return out;
}

// ------------------------------------------------------------------ layout

std::vector<std::pair<std::size_t, std::size_t>> ParameterLayout::policy_ranges() const {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (int id : policy_trunk) {
    const auto& l = layers[static_cast<std::size_t>(id)];
    ranges.emplace_back(l.weight_offset, l.weight_offset + l.size());
  }
  const auto& head = layers[static_cast<std::size_t>(policy_head)];
  ranges.emplace_back(head.weight_offset, head.weight_offset + head.size());
  return ranges;
}

std::vector<std::pair<std::size_t, std::size_t>> ParameterLayout::critic_ranges() const {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (int id : critic_trunk) {
    const auto& l = layers[static_cast<std::size_t>(id)];
    ranges.emplace_back(l.weight_offset, l.weight_offset + l.size());
  }
  for (int id : {value_head, entropy_head}) {
    const auto& l = layers[static_cast<std::size_t>(id)];
    ranges.emplace_back(l.weight_offset, l.weight_offset + l.size());
  }
  return ranges;
}

ParameterLayout make_layout(const NetworkConfig& config) {
  if (config.input_size <= 0 || config.num_actions <= 0) {
    throw Error(ErrorCode::kShapeMismatch, "network needs positive input and action sizes");
  }
  for (int h : config.hidden) {
    if (h <= 0) throw Error(ErrorCode::kShapeMismatch, "hidden sizes must be positive");
  }
  ParameterLayout layout;
  auto add = [&](std::string name, int in, int out) {
    LayerSpec spec{std::move(name), in, out, layout.total, 0};
    spec.bias_offset = spec.weight_offset + static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
    layout.total += spec.size();
    layout.layers.push_back(spec);
    return static_cast<int>(layout.layers.size() - 1);
  };
  auto add_trunk = [&](const std::string& prefix) {
    std::vector<int> ids;
    int in = config.input_size;
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
      ids.push_back(add(prefix + "." + std::to_string(i), in, config.hidden[i]));
      in = config.hidden[i];
    }
    return ids;
  };
  const int features = config.hidden.empty() ? config.input_size : config.hidden.back();
  if (config.shared_trunk) {
    layout.policy_trunk = add_trunk("trunk");
    layout.critic_trunk = layout.policy_trunk;
  } else {
    layout.policy_trunk = add_trunk("policy_trunk");
    layout.critic_trunk = add_trunk("critic_trunk");
  }
  layout.policy_head = add("policy_head", features, config.num_actions);
  layout.value_head = add("value_head", features, 1);
  layout.entropy_head = add("entropy_head", features, 1);
  return layout;
}

// ------------------------------------------------------------------ PopArt

double PopArtStats::sigma() const {
  const double variance = std::max(nu - mu * mu, sigma_min * sigma_min);
  return std::clamp(std::sqrt(variance), sigma_min, sigma_max);
}

PopArtUpdate popart_update_and_rescale(PopArtStats& stats, std::span<double> head_weights,
                                       double& head_bias, std::span<const double> targets) {
  if (targets.empty()) throw Error(ErrorCode::kInvalidArgument, "PopArt update needs targets");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double t : targets) {
    sum += t;
    sum_sq += t * t;
  }
  const double n = static_cast<double>(targets.size());
  const double mean = sum / n;
  const double mean_sq = sum_sq / n;

  const double old_mu = stats.mu;
  const double old_sigma = stats.sigma();
  stats.mu = stats.mu + stats.beta * (mean - stats.mu);
  stats.nu = stats.nu + stats.beta * (mean_sq - stats.nu);
  const double new_sigma = stats.sigma();

  PopArtUpdate result;
  result.degenerate_sigma = stats.nu - stats.mu * stats.mu < stats.sigma_min * stats.sigma_min;

  const double ratio = old_sigma / new_sigma;
  for (double& w : head_weights) w *= ratio;
  head_bias = head_bias * ratio + (old_mu - stats.mu) / new_sigma;
  return result;
}

// ----------------------------------------------------------------- network

DualHeadNetwork::DualHeadNetwork(NetworkConfig config)
    : config_(std::move(config)), layout_(make_layout(config_)), params_(layout_.total, 0.0) {}

void DualHeadNetwork::initialize(CounterRng& rng) {
  std::fill(params_.begin(), params_.end(), 0.0);
  auto init_layer = [&](int id, double gain) {
    const LayerSpec& l = layout_.layers[static_cast<std::size_t>(id)];
    orthogonal_fill(rng, l.out, l.in, gain, params_.data() + l.weight_offset);
  };
  for (int id : layout_.policy_trunk) init_layer(id, std::sqrt(2.0));
  if (!config_.shared_trunk) {
    for (int id : layout_.critic_trunk) init_layer(id, std::sqrt(2.0));
  }
  init_layer(layout_.policy_head, 0.01);
  init_layer(layout_.value_head, 1.0);
  init_layer(layout_.entropy_head, 1.0);
  const double beta_v = value_stats.beta;
  const double beta_h = entropy_stats.beta;
  value_stats = PopArtStats{};
  entropy_stats = PopArtStats{};
  value_stats.beta = beta_v;
  entropy_stats.beta = beta_h;
}

void DualHeadNetwork::set_params(std::span<const double> params) {
  check_finite_size(params.size(), params_.size(), "set_params");
  std::copy(params.begin(), params.end(), params_.begin());
}

std::span<double> DualHeadNetwork::head_weights(Head head) {
  const int id = head == Head::kPolicy  ? layout_.policy_head
                 : head == Head::kValue ? layout_.value_head
                                        : layout_.entropy_head;
  const LayerSpec& l = layout_.layers[static_cast<std::size_t>(id)];
  return std::span<double>(params_).subspan(l.weight_offset, l.bias_offset - l.weight_offset);
}

double& DualHeadNetwork::head_bias(Head head) {
  if (head == Head::kPolicy) throw Error(ErrorCode::kInvalidArgument, "policy head has a bias vector");
  const int id = head == Head::kValue ? layout_.value_head : layout_.entropy_head;
  return params_[layout_.layers[static_cast<std::size_t>(id)].bias_offset];
}

NetOutput DualHeadNetwork::forward(std::span<const double> observation) const {
  const ForwardPass pass = forward_batch(observation, 1);
  NetOutput out;
  out.logits = pass.logits;
  out.value_norm = pass.value_norm[0];
  out.entropy_value_norm = pass.entropy_norm[0];
  return out;
}

ForwardPass DualHeadNetwork::forward_batch(std::span<const double> observations,
                                           std::size_t batch) const {
  check_finite_size(observations.size(), batch * static_cast<std::size_t>(config_.input_size),
                    "forward observations");
  ForwardPass pass;
  pass.batch = batch;
  pass.total_params = params_.size();
  pass.input.assign(observations.begin(), observations.end());

  auto run_trunk = [&](const std::vector<int>& ids, std::vector<std::vector<double>>& acts) {
    const double* in = pass.input.data();
    for (int id : ids) {
      const LayerSpec& l = layout_.layers[static_cast<std::size_t>(id)];
      std::vector<double> out(batch * static_cast<std::size_t>(l.out));
      dense_forward(in, batch, l, params_.data(), out.data());
      for (double& x : out) x = std::tanh(x);
      acts.push_back(std::move(out));
      in = acts.back().data();
    }
  };
  run_trunk(layout_.policy_trunk, pass.policy_acts);
  if (!config_.shared_trunk) run_trunk(layout_.critic_trunk, pass.critic_acts);

  const double* policy_features =
      pass.policy_acts.empty() ? pass.input.data() : pass.policy_acts.back().data();
  const double* critic_features =
      config_.shared_trunk ? policy_features
                           : (pass.critic_acts.empty() ? pass.input.data()
                                                       : pass.critic_acts.back().data());

  pass.logits.resize(batch * static_cast<std::size_t>(config_.num_actions));
  dense_forward(policy_features, batch, layout_.layers[static_cast<std::size_t>(layout_.policy_head)],
                params_.data(), pass.logits.data());
  pass.value_norm.resize(batch);
  dense_forward(critic_features, batch, layout_.layers[static_cast<std::size_t>(layout_.value_head)],
                params_.data(), pass.value_norm.data());
  pass.entropy_norm.resize(batch);
  dense_forward(critic_features, batch,
                layout_.layers[static_cast<std::size_t>(layout_.entropy_head)], params_.data(),
                pass.entropy_norm.data());
  return pass;
}

std::vector<double> DualHeadNetwork::backward(const ForwardPass& pass,
                                              const OutputGradients& grads) const {
  if (pass.empty() || pass.total_params != params_.size() ||
      pass.input.size() != pass.batch * static_cast<std::size_t>(config_.input_size)) {
    throw Error(ErrorCode::kNoCachedForward, "backward() needs a forward pass of this network");
  }
  const std::size_t batch = pass.batch;
  check_finite_size(grads.logits.size(), batch * static_cast<std::size_t>(config_.num_actions),
                    "logit gradient");
  if (!grads.value.empty()) check_finite_size(grads.value.size(), batch, "value gradient");
  if (!grads.entropy.empty()) check_finite_size(grads.entropy.size(), batch, "entropy gradient");

  std::vector<double> grad(params_.size(), 0.0);
  const double* p = params_.data();
  const std::size_t features = static_cast<std::size_t>(
      config_.hidden.empty() ? config_.input_size : config_.hidden.back());
  const bool policy_has_trunk = !pass.policy_acts.empty();

  const double* policy_features = policy_has_trunk ? pass.policy_acts.back().data() : pass.input.data();
  std::vector<double> d_policy(batch * features, 0.0);
  dense_backward(policy_features, batch, layout_.layers[static_cast<std::size_t>(layout_.policy_head)],
                 p, grads.logits.data(), grad.data(), policy_has_trunk ? d_policy.data() : nullptr);

  const bool critic_separate = !config_.shared_trunk;
  const double* critic_features =
      critic_separate ? (pass.critic_acts.empty() ? pass.input.data() : pass.critic_acts.back().data())
                      : policy_features;
  std::vector<double> d_critic_storage;
  double* d_critic = d_policy.data();
  if (critic_separate) {
    d_critic_storage.assign(batch * features, 0.0);
    d_critic = d_critic_storage.data();
  }
  const bool critic_has_trunk = critic_separate ? !pass.critic_acts.empty() : policy_has_trunk;
  if (!grads.value.empty()) {
    dense_backward(critic_features, batch, layout_.layers[static_cast<std::size_t>(layout_.value_head)],
                   p, grads.value.data(), grad.data(), critic_has_trunk ? d_critic : nullptr);
  }
  if (!grads.entropy.empty()) {
    dense_backward(critic_features, batch,
                   layout_.layers[static_cast<std::size_t>(layout_.entropy_head)], p,
                   grads.entropy.data(), grad.data(), critic_has_trunk ? d_critic : nullptr);
  }

  auto back_trunk = [&](const std::vector<int>& ids, const std::vector<std::vector<double>>& acts,
                        std::vector<double> d_out) {
    for (std::size_t k = ids.size(); k-- > 0;) {
      const LayerSpec& l = layout_.layers[static_cast<std::size_t>(ids[k])];
      const std::vector<double>& a = acts[k];
      for (std::size_t i = 0; i < d_out.size(); ++i) d_out[i] *= 1.0 - a[i] * a[i];
      const double* in = k == 0 ? pass.input.data() : acts[k - 1].data();
      std::vector<double> d_in;
      if (k > 0) d_in.assign(batch * static_cast<std::size_t>(l.in), 0.0);
      dense_backward(in, batch, l, p, d_out.data(), grad.data(), k > 0 ? d_in.data() : nullptr);
      d_out = std::move(d_in);
    }
  };
  if (policy_has_trunk) back_trunk(layout_.policy_trunk, pass.policy_acts, std::move(d_policy));
  if (critic_separate && critic_has_trunk) {
    back_trunk(layout_.critic_trunk, pass.critic_acts, std::move(d_critic_storage));
  }
  return grad;
}

std::vector<double> DualHeadNetwork::logits_jvp(const ForwardPass& pass,
                                                std::span<const double> direction) const {
  if (pass.empty() || pass.total_params != params_.size()) {
    throw Error(ErrorCode::kNoCachedForward, "logits_jvp() needs a forward pass of this network");
  }
  check_finite_size(direction.size(), params_.size(), "jvp direction");
  const std::size_t batch = pass.batch;
  const double* p = params_.data();
  std::vector<double> act_dot;
  const double* in = pass.input.data();
  const double* in_dot = nullptr;
  for (std::size_t k = 0; k < layout_.policy_trunk.size(); ++k) {
    const LayerSpec& l = layout_.layers[static_cast<std::size_t>(layout_.policy_trunk[k])];
    std::vector<double> z_dot(batch * static_cast<std::size_t>(l.out));
    dense_jvp(in, in_dot, batch, l, p, direction.data(), z_dot.data());
    const std::vector<double>& a = pass.policy_acts[k];
    for (std::size_t i = 0; i < z_dot.size(); ++i) z_dot[i] *= 1.0 - a[i] * a[i];
    act_dot = std::move(z_dot);
    in = a.data();
    in_dot = act_dot.data();
  }
  std::vector<double> out(batch * static_cast<std::size_t>(config_.num_actions));
  dense_jvp(in, in_dot, batch, layout_.layers[static_cast<std::size_t>(layout_.policy_head)], p,
            direction.data(), out.data());
  return out;
}

// -------------------------------------------------------------------- Adam

AdamOptimizer::AdamOptimizer(std::size_t num_params, AdamConfig config)
    : config_(config), m_(num_params, 0.0), v_(num_params, 0.0) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Adam step with mismatched sizes");
  }
  ++t_;
  const double correction1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

}  // namespace eapo
