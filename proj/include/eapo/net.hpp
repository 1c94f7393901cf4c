#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "eapo/rng.hpp"

namespace eapo {

// Numerically stable log-softmax (max subtraction).
std::vector<double> log_softmax(std::span<const double> logits);

struct NetworkConfig {
  int input_size = 16;
  int num_actions = 7;
  std::vector<int> hidden{64, 64};
  // false: the policy head gets its own trunk; the two critic heads always
  // share one.
  bool shared_trunk = true;

  bool operator==(const NetworkConfig&) const = default;
};

// Dense layer stored in the flat parameter vector: weight is row-major
// [out x in] at weight_offset, bias [out] at bias_offset.
struct LayerSpec {
  std::string name;
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(in) * static_cast<std::size_t>(out) +
           static_cast<std::size_t>(out);
  }
  bool operator==(const LayerSpec&) const = default;
};

struct ParameterLayout {
  std::vector<LayerSpec> layers;
  std::vector<int> policy_trunk;  // layer indices, input to output
  std::vector<int> critic_trunk;  // same as policy_trunk when shared
  int policy_head = -1;
  int value_head = -1;
  int entropy_head = -1;
  std::size_t total = 0;

  // Parameter index ranges [begin, end) that influence the policy logits.
  std::vector<std::pair<std::size_t, std::size_t>> policy_ranges() const;
  // Parameter index ranges that influence the critic heads.
  std::vector<std::pair<std::size_t, std::size_t>> critic_ranges() const;
};

ParameterLayout make_layout(const NetworkConfig& config);

// Adaptive target normalization for one critic head.
struct PopArtStats {
  double mu = 0.0;
  double nu = 1.0;  // running second moment
  double beta = 0.03;
  double sigma_min = 1e-4;
  double sigma_max = 1e6;

  double sigma() const;
  double normalize(double target) const { return (target - mu) / sigma(); }
  double denormalize(double normalized) const { return sigma() * normalized + mu; }

  bool operator==(const PopArtStats&) const = default;
};

struct PopArtUpdate {
  // sigma was clamped to sigma_min (targets have collapsed); the update still ran.
  bool degenerate_sigma = false;
};

// mu' = mu + beta (mean - mu), nu' = nu + beta (mean_sq - nu); then the head is
// rewritten so sigma' (w' x + b') + mu' == sigma (w x + b) + mu for every x.
// Throws Error{kInvalidArgument} on an empty batch.
PopArtUpdate popart_update_and_rescale(PopArtStats& stats, std::span<double> head_weights,
                                       double& head_bias, std::span<const double> targets);

struct NetOutput {
  std::vector<double> logits;
  double value_norm = 0.0;
  double entropy_value_norm = 0.0;
};

// Activations of one batched forward pass, consumed by backward().
struct ForwardPass {
  std::size_t batch = 0;
  std::size_t total_params = 0;  // identifies the producing network's layout
  std::vector<double> input;     // [batch x input_size]
  std::vector<std::vector<double>> policy_acts;  // tanh outputs per trunk layer
  std::vector<std::vector<double>> critic_acts;  // empty when shared
  std::vector<double> logits;        // [batch x num_actions]
  std::vector<double> value_norm;    // [batch]
  std::vector<double> entropy_norm;  // [batch]

  bool empty() const { return batch == 0; }
};

// Loss gradient at the network outputs. Empty value/entropy vectors mean the
// head is detached and skipped entirely.
struct OutputGradients {
  std::vector<double> logits;   // [batch x num_actions]
  std::vector<double> value;    // [batch] or empty
  std::vector<double> entropy;  // [batch] or empty
};

class DualHeadNetwork {
 public:
  enum class Head { kPolicy, kValue, kEntropy };

  explicit DualHeadNetwork(NetworkConfig config);

  // Orthogonal weights (gain sqrt(2) trunk, 0.01 policy head, 1.0 critic
  // heads), zero biases, PopArt statistics reset.
  void initialize(CounterRng& rng);

  const NetworkConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  void set_params(std::span<const double> params);

  std::span<double> head_weights(Head head);
  double& head_bias(Head head);  // critic heads only

  PopArtStats value_stats;
  PopArtStats entropy_stats;

  NetOutput forward(std::span<const double> observation) const;
  // observations: [batch x input_size], row-major. Throws Error{kShapeMismatch}.
  ForwardPass forward_batch(std::span<const double> observations, std::size_t batch) const;
  // Gradient of the scalar loss whose output gradient is `grads`.
  // Throws Error{kNoCachedForward} when `pass` is empty or came from a
  // different layout, Error{kShapeMismatch} on bad gradient sizes.
  std::vector<double> backward(const ForwardPass& pass, const OutputGradients& grads) const;
  // Directional derivative of the logits along `direction` (a full parameter
  // vector): [batch x num_actions].
  std::vector<double> logits_jvp(const ForwardPass& pass, std::span<const double> direction) const;

  double denormalized_value(double value_norm) const { return value_stats.denormalize(value_norm); }
  double denormalized_entropy(double entropy_norm) const {
    return entropy_stats.denormalize(entropy_norm);
  }

 private:
  NetworkConfig config_;
  ParameterLayout layout_;
  std::vector<double> params_;
};

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t num_params, AdamConfig config = {});

  // Bias-corrected first/second-moment update. Throws Error{kShapeMismatch}.
  void step(std::span<double> params, std::span<const double> grads);

  const AdamConfig& config() const { return config_; }
  long long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  long long t_ = 0;
};

// Scales grads in place so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::span<double> grads, double max_norm);

}  // namespace eapo
