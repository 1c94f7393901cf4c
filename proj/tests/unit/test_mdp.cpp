#include <doctest.h>

#include <sstream>

#include "eapo/envs.hpp"
#include "eapo/error.hpp"
#include "eapo/mdp.hpp"
#include "support/errors.hpp"

using namespace eapo;
using testing::code_of;

namespace {

DeterministicTabularMdp two_state_chain() {
  DeterministicTabularMdp m;
  m.num_states = 2;
  m.num_actions = 1;
  m.transition = {1, 1};
  m.reward = {1.0, 0.0};
  m.initial_distribution = {1.0, 0.0};
  m.terminal_mask = {0, 1};
  return m;
}

StepRecord rec(TerminalKind kind = TerminalKind::kNone) {
  StepRecord r;
  r.observation = {0.0};
  r.log_prob = -0.5;
  r.terminal_kind = kind;
  return r;
}

}  // namespace

TEST_SUITE("mdp") {
  TEST_CASE("validate_mdp accepts a valid chain and rejects broken tables") {
    const DeterministicTabularMdp ok = two_state_chain();
    CHECK(&validate_mdp(ok) == &ok);

    auto bad = ok;
    bad.transition[0] = 2;
    CHECK(code_of([&] { validate_mdp(bad); }) == ErrorCode::kIndexOutOfRange);

    bad = ok;
    bad.initial_distribution = {0.5, 0.6};
    CHECK(code_of([&] { validate_mdp(bad); }) == ErrorCode::kBadDistribution);

    bad = ok;
    bad.reward[1] = 0.5;
    CHECK(code_of([&] { validate_mdp(bad); }) == ErrorCode::kNonAbsorbingTerminal);

    bad = ok;
    bad.reward.pop_back();
    CHECK(code_of([&] { validate_mdp(bad); }) == ErrorCode::kShapeMismatch);
  }

  TEST_CASE("generated MDPs always validate") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const int s = 2 + static_cast<int>(seed % 9);
      const int a = 1 + static_cast<int>(seed % 4);
      CHECK_NOTHROW(validate_mdp(random_tabular_mdp(seed, s, a)));
    }
    CHECK_NOTHROW(validate_mdp(chain_mdp(10, 4)));
  }

  TEST_CASE("text format round-trips exactly") {
    const DeterministicTabularMdp m = random_tabular_mdp(77, 7, 3);
    std::stringstream ss;
    write_mdp_text(ss, m);
    CHECK(read_mdp_text(ss) == m);

    std::istringstream garbage("2 1\n1 0.5\n");
    CHECK(code_of([&] { read_mdp_text(garbage); }) == ErrorCode::kParse);
  }

  TEST_CASE("estimator config validation") {
    EstimatorConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.gamma_v = 1.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
    cfg = EstimatorConfig{};
    cfg.gamma_h = 1.0;
    CHECK_NOTHROW(cfg.validate(true));
    CHECK(code_of([&] { cfg.validate(false); }) == ErrorCode::kConfig);
    cfg = EstimatorConfig{};
    cfg.tau = -0.1;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::kConfig);
  }

  TEST_CASE("episode_slices splits at terminal records") {
    RolloutBuffer b;
    for (int i = 0; i < 5; ++i) b.records.push_back(rec(i == 3 ? TerminalKind::kTerminated : TerminalKind::kNone));
    const auto slices = episode_slices(b);
    REQUIRE(slices.size() == 2);
    CHECK(slices[0] == EpisodeSlice{0, 3, TerminalKind::kTerminated, 0});
    CHECK(slices[1] == EpisodeSlice{4, 4, TerminalKind::kNone, 0});

    RolloutBuffer plain;
    for (int i = 0; i < 4; ++i) plain.records.push_back(rec());
    const auto one = episode_slices(plain);
    REQUIRE(one.size() == 1);
    CHECK(one[0].first == 0);
    CHECK(one[0].last == 3);

    CHECK(episode_slices(RolloutBuffer{}).empty());
  }

  TEST_CASE("slices tile fragments with no gaps") {
    RolloutBuffer b;
    b.add_fragment({rec(), rec(TerminalKind::kTerminated), rec(), rec(TerminalKind::kTruncated)}, 1.0, 2.0);
    b.add_fragment({rec(), rec(), rec()}, 3.0, 4.0);
    CHECK_NOTHROW(validate_buffer(b));
    const auto slices = episode_slices(b);
    std::size_t next = 0;
    for (const auto& s : slices) {
      CHECK(s.first == next);
      next = s.last + 1;
    }
    CHECK(next == b.size());
    CHECK(slices.size() == 3);
    CHECK(slices[1].kind == TerminalKind::kTruncated);
    CHECK(slices[2].fragment == 1);
  }

  TEST_CASE("validate_buffer rejects malformed buffers") {
    RolloutBuffer b;
    b.add_fragment({rec(TerminalKind::kTruncated), rec()}, 0.0, 0.0);
    CHECK(code_of([&] { validate_buffer(b); }) == ErrorCode::kSliceMismatch);

    RolloutBuffer gap;
    gap.add_fragment({rec()}, 0.0, 0.0);
    gap.records.push_back(rec());
    CHECK(code_of([&] { validate_buffer(gap); }) == ErrorCode::kSliceMismatch);

    RolloutBuffer positive;
    positive.add_fragment({rec()}, 0.0, 0.0);
    positive.records[0].log_prob = 0.1;
    CHECK(code_of([&] { validate_buffer(positive); }) == ErrorCode::kInvalidArgument);
  }
}
