#include <doctest.h>

#include <cmath>
#include <numeric>

#include "eapo/envs.hpp"
#include "eapo/estimation.hpp"
#include "eapo/oracle.hpp"
#include "eapo/rng.hpp"
#include "support/errors.hpp"

using namespace eapo;
using testing::code_of;

namespace {

StepRecord make_step(double reward, double log_prob, double v, double vh,
                     TerminalKind kind = TerminalKind::kNone) {
  StepRecord r;
  r.observation = {0.0};
  r.reward = reward;
  r.log_prob = log_prob;
  r.value_pred = v;
  r.entropy_value_pred = vh;
  r.terminal_kind = kind;
  return r;
}

// Random buffer: two fragments, one terminated episode inside the first, the
// second ending in a truncation.
RolloutBuffer random_buffer(std::uint64_t seed) {
  CounterRng rng(seed, 3);
  auto step = [&](TerminalKind kind = TerminalKind::kNone) {
    return make_step(rng.normal(), -0.1 - rng.uniform() * 2.0, rng.normal(), 3.0 * rng.uniform(),
                     kind);
  };
  RolloutBuffer buffer;
  std::vector<StepRecord> a;
  for (int i = 0; i < 5; ++i) a.push_back(step());
  a.push_back(step(TerminalKind::kTerminated));
  for (int i = 0; i < 4; ++i) a.push_back(step());
  buffer.add_fragment(std::move(a), rng.normal(), rng.uniform());
  std::vector<StepRecord> b;
  for (int i = 0; i < 6; ++i) b.push_back(step());
  b.push_back(step(TerminalKind::kTruncated));
  buffer.add_fragment(std::move(b), rng.normal(), rng.uniform());
  return buffer;
}

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double std_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

}  // namespace

TEST_SUITE("estimation") {
  TEST_CASE("entropy TD residual examples") {
    CHECK(entropy_td_residual(std::log(0.5), 0.0, 0.0, TerminalKind::kNone, 0.9) ==
          doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(entropy_td_residual(0.0, 2.5, 2.5, TerminalKind::kNone, 1.0) == 0.0);
    CHECK(entropy_td_residual(std::log(0.25), 2.0, 7.0, TerminalKind::kTerminated, 0.9) ==
          doctest::Approx(-0.613706).epsilon(1e-6));
    // Truncation bootstraps from the supplied next value.
    CHECK(entropy_td_residual(std::log(0.25), 2.0, 1.0, TerminalKind::kTruncated, 0.5) ==
          doctest::Approx(std::log(4.0) + 0.5 - 2.0).epsilon(1e-15));
  }

  TEST_CASE("value TD residual examples") {
    CHECK(value_td_residual(1.0, 0.0, 0.0, TerminalKind::kNone, 0.99) == 1.0);
    CHECK(value_td_residual(0.5, 0.5 + 0.9 * 2.0, 2.0, TerminalKind::kNone, 0.9) ==
          doctest::Approx(0.0).epsilon(1e-15));
    CounterRng rng(1, 0);
    for (int i = 0; i < 100; ++i) {
      const double r = rng.normal();
      const double v = rng.normal();
      const double b = rng.normal();
      CHECK(value_td_residual(r, v, b, TerminalKind::kTruncated, 0.97) == r + 0.97 * b - v);
      CHECK(value_td_residual(r, v, b, TerminalKind::kTerminated, 0.97) == r - v);
    }
  }

  TEST_CASE("GAE examples") {
    const std::vector<double> delta{1.0, 2.0};
    const std::vector<EpisodeSlice> one{{0, 1, TerminalKind::kNone, 0}};
    const auto a = gae(delta, one, 0.9, 0.5);
    CHECK(a[0] == doctest::Approx(1.9).epsilon(1e-15));
    CHECK(a[1] == 2.0);
    CHECK(gae(delta, one, 0.9, 0.0) == delta);

    // Two slices do not leak into each other.
    const std::vector<EpisodeSlice> two{{0, 0, TerminalKind::kTerminated, 0},
                                        {1, 1, TerminalKind::kNone, 0}};
    CHECK(gae(delta, two, 0.9, 1.0) == delta);

    const std::vector<EpisodeSlice> gap{{0, 0, TerminalKind::kTerminated, 0}};
    CHECK(code_of([&] { gae(delta, gap, 0.9, 0.5); }) == ErrorCode::kSliceMismatch);
  }

  TEST_CASE("lambda one equals Monte Carlo return minus value") {
    CounterRng rng(5, 0);
    const double gamma = 0.95;
    const double gamma_h = 0.8;
    std::vector<StepRecord> steps;
    for (int i = 0; i < 12; ++i) {
      steps.push_back(make_step(rng.normal(), -rng.uniform() * 2.0, rng.normal(), rng.uniform(),
                                i == 11 ? TerminalKind::kTerminated : TerminalKind::kNone));
    }
    RolloutBuffer buffer;
    buffer.add_fragment(steps, 0.0, 0.0);
    EstimatorConfig cfg;
    cfg.gamma_v = gamma;
    cfg.lambda_v = 1.0;
    cfg.gamma_h = gamma_h;
    cfg.lambda_h = 1.0;
    cfg.normalize_advantage = false;
    const auto est = estimate_batch(buffer, cfg);
    for (std::size_t t = 0; t < steps.size(); ++t) {
      double g = 0.0;
      double gh = 0.0;
      double dv = 1.0;
      double dh = 1.0;
      for (std::size_t l = t; l < steps.size(); ++l) {
        g += dv * steps[l].reward;
        gh += dh * -steps[l].log_prob;
        dv *= gamma;
        dh *= gamma_h;
      }
      CHECK(est.adv_v[t] == doctest::Approx(g - steps[t].value_pred).epsilon(1e-12));
      CHECK(est.target_v[t] == doctest::Approx(g).epsilon(1e-12));
      CHECK(est.target_h[t] == doctest::Approx(gh).epsilon(1e-12));
    }
  }

  TEST_CASE("critic targets") {
    const std::vector<double> pred{0.5, -1.0, 2.0};
    CHECK(critic_targets(std::vector<double>(3, 0.0), pred) == pred);
    const std::vector<double> adv{0.25, 1.5, -0.75};
    const auto t = critic_targets(adv, pred);
    for (std::size_t i = 0; i < 3; ++i) CHECK(t[i] - pred[i] == adv[i]);
    CHECK(code_of([&] { critic_targets(adv, std::vector<double>(2)); }) == ErrorCode::kShapeMismatch);
  }

  TEST_CASE("soft advantage combination") {
    const std::vector<double> av{1.0, -1.0};
    const std::vector<double> ah{2.0, -2.0};
    CHECK(combine_soft_advantage(av, ah, 0.0, false) == av);
    CHECK(combine_soft_advantage(av, ah, 0.5, false) == std::vector<double>{2.0, -2.0});

    CounterRng rng(8, 0);
    std::vector<double> x(257);
    std::vector<double> y(257);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = 3.0 + 2.0 * rng.normal();
      y[i] = rng.normal();
    }
    const auto n = combine_soft_advantage(x, y, 0.3, true);
    CHECK(std::abs(mean_of(n)) < 1e-6);
    CHECK(std::abs(std_of(n) - 1.0) < 1e-6);
    CHECK(code_of([&] { combine_soft_advantage(x, av, 0.3, true); }) == ErrorCode::kShapeMismatch);
  }

  TEST_CASE("empty buffer gives an empty batch") {
    const auto est = estimate_batch(RolloutBuffer{}, EstimatorConfig{});
    CHECK(est.size() == 0u);
    CHECK(est.adv_v.empty());
  }

  TEST_CASE("estimate_batch follows the bootstrap rules") {
    const auto buffer = random_buffer(1);
    EstimatorConfig cfg;
    cfg.lambda_v = 0.0;
    cfg.lambda_h = 0.0;
    cfg.normalize_advantage = false;
    const auto est = estimate_batch(buffer, cfg);
    const auto& r = buffer.records;
    REQUIRE(est.size() == r.size());
    // Middle of an episode: next prediction.
    CHECK(est.delta_v[2] == doctest::Approx(r[2].reward + cfg.gamma_v * r[3].value_pred - r[2].value_pred));
    // Terminated: no bootstrap.
    CHECK(est.delta_v[5] == doctest::Approx(r[5].reward - r[5].value_pred));
    CHECK(est.delta_h[5] == doctest::Approx(-r[5].log_prob - r[5].entropy_value_pred));
    // Fragment end without a terminal: fragment bootstrap.
    const auto& f0 = buffer.fragments[0];
    CHECK(est.delta_v[9] ==
          doctest::Approx(r[9].reward + cfg.gamma_v * f0.bootstrap_value - r[9].value_pred));
    CHECK(est.delta_h[9] == doctest::Approx(-r[9].log_prob + cfg.gamma_h * f0.bootstrap_entropy_value -
                                            r[9].entropy_value_pred));
    // Truncated: fragment bootstrap.
    const auto& f1 = buffer.fragments[1];
    CHECK(est.delta_v[16] ==
          doctest::Approx(r[16].reward + cfg.gamma_v * f1.bootstrap_value - r[16].value_pred));
  }

  TEST_CASE("soft advantage is linear in the temperature") {
    const auto buffer = random_buffer(2);
    EstimatorConfig cfg;
    cfg.normalize_advantage = false;
    cfg.tau = 0.0;
    const auto base = estimate_batch(buffer, cfg);
    CHECK(base.adv_soft == base.adv_v);
    cfg.tau = 0.37;
    const auto soft = estimate_batch(buffer, cfg);
    for (std::size_t i = 0; i < soft.size(); ++i) {
      CHECK(soft.adv_soft[i] == doctest::Approx(base.adv_v[i] + 0.37 * base.adv_h[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("value stream ignores the entropy discount") {
    const auto buffer = random_buffer(3);
    EstimatorConfig cfg;
    cfg.gamma_h = 0.5;
    cfg.lambda_h = 0.3;
    const auto a = estimate_batch(buffer, cfg);
    cfg.gamma_h = 0.99;
    cfg.lambda_h = 0.9;
    const auto b = estimate_batch(buffer, cfg);
    CHECK(a.adv_v == b.adv_v);
    CHECK(a.target_v == b.target_v);
    CHECK(a.adv_h != b.adv_h);
  }

  TEST_CASE("entropy-augmented reward equals EAPO at matched discounts") {
    const double tau = 0.2;
    const auto buffer = random_buffer(4);
    EstimatorConfig cfg;
    cfg.tau = tau;
    cfg.gamma_h = cfg.gamma_v;
    cfg.lambda_h = cfg.lambda_v;
    cfg.normalize_advantage = false;
    const auto eapo = estimate_batch(buffer, cfg);

    // Merged critic: v + tau v_h.
    RolloutBuffer merged = buffer;
    for (auto& r : merged.records) r.value_pred += tau * r.entropy_value_pred;
    for (auto& f : merged.fragments) f.bootstrap_value += tau * f.bootstrap_entropy_value;
    const auto reward = estimate_entropy_reward_batch(merged, cfg);
    for (std::size_t i = 0; i < eapo.size(); ++i) {
      CHECK(reward.adv_soft[i] == doctest::Approx(eapo.adv_soft[i]).epsilon(1e-12));
      CHECK(reward.adv_h[i] == 0.0);
    }

    cfg.normalize_advantage = true;
    const auto a = estimate_batch(buffer, cfg);
    const auto b = estimate_entropy_reward_batch(merged, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(b.adv_soft[i] == doctest::Approx(a.adv_soft[i]).epsilon(1e-10));
    }
  }

  TEST_CASE("oracle critics give mean-zero advantages on chain rollouts") {
    const auto mdp = chain_mdp(3, 2);
    const auto policy = TabularPolicy::uniform(3, 2);
    EstimatorConfig cfg;
    cfg.gamma_v = 0.9;
    cfg.gamma_h = 0.9;
    cfg.lambda_v = 0.0;
    cfg.lambda_h = 0.0;
    cfg.normalize_advantage = false;
    const auto sol = oracle_advantages(mdp, policy, cfg);

    TabularEnv env(mdp, "chain", 8);
    CounterRng rng(31, 0);
    RolloutBuffer buffer;
    std::vector<StepRecord> steps;
    env.reset(rng);
    for (int t = 0; t < 40000; ++t) {
      const int s = env.state();
      const int a = static_cast<int>(rng.uniform_int(2));
      auto out = env.step(a);
      steps.push_back(make_step(out.reward, std::log(0.5), sol.v[static_cast<std::size_t>(s)],
                                sol.v_h[static_cast<std::size_t>(s)], out.terminal_kind));
      if (out.terminal_kind != TerminalKind::kNone) {
        const double bv = sol.v[static_cast<std::size_t>(env.state())];
        const double bh = sol.v_h[static_cast<std::size_t>(env.state())];
        buffer.add_fragment(std::move(steps), bv, bh);
        steps.clear();
        env.reset(rng);
      }
    }
    if (!steps.empty()) {
      buffer.add_fragment(std::move(steps), sol.v[static_cast<std::size_t>(env.state())],
                          sol.v_h[static_cast<std::size_t>(env.state())]);
    }
    const auto est = estimate_batch(buffer, cfg);
    const double n = static_cast<double>(est.size());
    CHECK(std::abs(mean_of(est.adv_v)) < 3.0 * std_of(est.adv_v) / std::sqrt(n));
    CHECK(std::abs(mean_of(est.adv_h)) < 3.0 * std_of(est.adv_h) / std::sqrt(n) + 1e-12);
  }

  TEST_CASE("per-pair entropy advantages match the oracle on chain_mdp(5,3)") {
    const auto mdp = chain_mdp(5, 3);
    for (bool uniform : {true, false}) {
      const auto policy = uniform ? TabularPolicy::uniform(5, 3)
                                  : TabularPolicy::from_logits(5, 3, {0.5, 0.0, -0.4, 0.2, 0.9, 0.0,
                                                                      -0.3, 0.1, 0.4, 1.0, -1.0, 0.0,
                                                                      0.0, 0.0, 0.0});
      EstimatorConfig cfg;
      cfg.gamma_h = 0.9;
      cfg.lambda_h = 0.0;
      const auto sol = oracle_advantages(mdp, policy, cfg);
      // Under a non-uniform policy the conditional mean of the residual is
      // the per-action form.
      const auto& expected = uniform ? sol.a_h : sol.a_h_action;

      TabularEnv env(mdp, "chain", 100000);
      CounterRng rng(uniform ? 41 : 42, 0);
      RolloutBuffer buffer;
      std::vector<StepRecord> steps;
      std::vector<std::size_t> pair_of;
      env.reset(rng);
      for (int t = 0; t < 100000; ++t) {
        const int s = env.state();
        const auto probs = std::span<const double>(policy.probs).subspan(mdp.index(s, 0), 3);
        const int a = static_cast<int>(rng.categorical(probs));
        const auto out = env.step(a);
        steps.push_back(make_step(out.reward, std::log(policy.prob(s, a)), sol.v[static_cast<std::size_t>(s)],
                                  sol.v_h[static_cast<std::size_t>(s)], out.terminal_kind));
        pair_of.push_back(mdp.index(s, a));
        if (out.terminal_kind != TerminalKind::kNone) {
          buffer.add_fragment(std::move(steps), 0.0, 0.0);
          steps.clear();
          env.reset(rng);
        }
      }
      const int last = env.state();
      buffer.add_fragment(std::move(steps), sol.v[static_cast<std::size_t>(last)],
                          sol.v_h[static_cast<std::size_t>(last)]);
      const auto est = estimate_batch(buffer, cfg);

      std::vector<double> sum(15, 0.0);
      std::vector<double> sum_sq(15, 0.0);
      std::vector<double> count(15, 0.0);
      for (std::size_t i = 0; i < est.size(); ++i) {
        sum[pair_of[i]] += est.adv_h[i];
        sum_sq[pair_of[i]] += est.adv_h[i] * est.adv_h[i];
        count[pair_of[i]] += 1.0;
      }
      for (std::size_t k = 0; k < 15; ++k) {
        if (count[k] < 2.0) continue;
        const double mean = sum[k] / count[k];
        const double var = std::max(sum_sq[k] / count[k] - mean * mean, 0.0);
        const double se = std::sqrt(var / count[k]);
        CHECK(std::abs(mean - expected[k]) <= 4.0 * se + 1e-9);
      }
    }
  }
}
