#include "eapo/mdp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "eapo/error.hpp"

namespace eapo {

namespace {

constexpr double kDistributionTolerance = 1e-12;

std::string state_action(int s, int a) {
  return "(" + std::to_string(s) + ", " + std::to_string(a) + ")";
}

// Next non-comment, non-blank line; false at EOF.
bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace

const DeterministicTabularMdp& validate_mdp(const DeterministicTabularMdp& mdp) {
  if (mdp.num_states <= 0 || mdp.num_actions <= 0) {
    throw Error(ErrorCode::kShapeMismatch, "MDP needs at least one state and one action");
  }
  const auto cells = static_cast<std::size_t>(mdp.num_states) *
                     static_cast<std::size_t>(mdp.num_actions);
  const auto states = static_cast<std::size_t>(mdp.num_states);
  if (mdp.transition.size() != cells || mdp.reward.size() != cells ||
      mdp.initial_distribution.size() != states || mdp.terminal_mask.size() != states) {
    throw Error(ErrorCode::kShapeMismatch, "table sizes do not match num_states/num_actions");
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      const int next = mdp.next_state(s, a);
      if (next < 0 || next >= mdp.num_states) {
        throw Error(ErrorCode::kIndexOutOfRange,
                    "transition " + state_action(s, a) + " -> " + std::to_string(next));
      }
      if (!std::isfinite(mdp.reward_of(s, a))) {
        throw Error(ErrorCode::kInvalidArgument, "non-finite reward at " + state_action(s, a));
      }
    }
  }
  double total = 0.0;
  for (double p : mdp.initial_distribution) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::kBadDistribution, "initial distribution has a negative entry");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kDistributionTolerance) {
    std::ostringstream msg;
    msg << "initial distribution sums to " << std::setprecision(17) << total;
    throw Error(ErrorCode::kBadDistribution, msg.str());
  }
  for (int s = 0; s < mdp.num_states; ++s) {
    if (!mdp.is_terminal(s)) continue;
    for (int a = 0; a < mdp.num_actions; ++a) {
      if (mdp.next_state(s, a) != s || mdp.reward_of(s, a) != 0.0) {
        throw Error(ErrorCode::kNonAbsorbingTerminal,
                    "terminal state " + std::to_string(s) + " leaks at action " +
                        std::to_string(a));
      }
    }
  }
  return mdp;
}

DeterministicTabularMdp read_mdp_text(std::istream& in) {
  DeterministicTabularMdp mdp;
  std::string line;
  if (!next_content_line(in, line)) throw Error(ErrorCode::kParse, "empty MDP file");
  {
    std::istringstream header(line);
    if (!(header >> mdp.num_states >> mdp.num_actions) || mdp.num_states <= 0 ||
        mdp.num_actions <= 0) {
      throw Error(ErrorCode::kParse, "bad header line: '" + line + "'");
    }
  }
  const auto cells = static_cast<std::size_t>(mdp.num_states) *
                     static_cast<std::size_t>(mdp.num_actions);
  mdp.transition.reserve(cells);
  mdp.reward.reserve(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    if (!next_content_line(in, line)) throw Error(ErrorCode::kParse, "truncated transition table");
    std::istringstream row(line);
    int next = 0;
    double r = 0.0;
    if (!(row >> next >> r)) throw Error(ErrorCode::kParse, "bad transition line: '" + line + "'");
    mdp.transition.push_back(next);
    mdp.reward.push_back(r);
  }
  if (!next_content_line(in, line)) throw Error(ErrorCode::kParse, "missing initial distribution");
  {
    std::istringstream row(line);
    double p = 0.0;
    while (row >> p) mdp.initial_distribution.push_back(p);
  }
  if (!next_content_line(in, line)) throw Error(ErrorCode::kParse, "missing terminal mask");
  {
    std::istringstream row(line);
    int t = 0;
    while (row >> t) mdp.terminal_mask.push_back(t != 0 ? 1 : 0);
  }
  if (mdp.initial_distribution.size() != static_cast<std::size_t>(mdp.num_states) ||
      mdp.terminal_mask.size() != static_cast<std::size_t>(mdp.num_states)) {
    throw Error(ErrorCode::kParse, "initial distribution / terminal mask length mismatch");
  }
  return mdp;
}

void write_mdp_text(std::ostream& out, const DeterministicTabularMdp& mdp) {
  out << mdp.num_states << ' ' << mdp.num_actions << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < mdp.transition.size(); ++i) {
    out << mdp.transition[i] << ' ' << mdp.reward[i] << '\n';
  }
  for (std::size_t s = 0; s < mdp.initial_distribution.size(); ++s) {
    out << (s ? " " : "") << mdp.initial_distribution[s];
  }
  out << '\n';
  for (std::size_t s = 0; s < mdp.terminal_mask.size(); ++s) {
    out << (s ? " " : "") << static_cast<int>(mdp.terminal_mask[s]);
  }
  out << '\n';
}

DeterministicTabularMdp load_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_mdp_text(in);
}

void save_mdp_file(const std::string& path, const DeterministicTabularMdp& mdp) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_mdp_text(out, mdp);
}

void EstimatorConfig::validate(bool episodic) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kConfig, what);
  };
  require(gamma_v >= 0.0 && gamma_v < 1.0, "gamma_v must lie in [0, 1)");
  require(lambda_v >= 0.0 && lambda_v <= 1.0, "lambda_v must lie in [0, 1]");
  require(gamma_h >= 0.0 && gamma_h <= 1.0, "gamma_h must lie in [0, 1]");
  require(gamma_h < 1.0 || episodic, "gamma_h = 1 requires an episodic environment");
  require(lambda_h >= 0.0 && lambda_h <= 1.0, "lambda_h must lie in [0, 1]");
  require(tau >= 0.0 && std::isfinite(tau), "tau must be >= 0");
  require(clip_epsilon > 0.0, "clip_epsilon must be > 0");
  require(c1 >= 0.0 && c2 >= 0.0, "c1 and c2 must be >= 0");
}

const char* terminal_kind_name(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::kNone: return "none";
    case TerminalKind::kTerminated: return "terminated";
    case TerminalKind::kTruncated: return "truncated";
  }
  return "?";
}

void RolloutBuffer::add_fragment(std::vector<StepRecord> steps, double bootstrap_value,
                                 double bootstrap_entropy_value) {
  Fragment fragment;
  fragment.begin = records.size();
  fragment.end = records.size() + steps.size();
  fragment.bootstrap_value = bootstrap_value;
  fragment.bootstrap_entropy_value = bootstrap_entropy_value;
  for (auto& step : steps) records.push_back(std::move(step));
  fragments.push_back(fragment);
}

void validate_buffer(const RolloutBuffer& buffer) {
  std::size_t expected_begin = 0;
  for (const auto& fragment : buffer.fragments) {
    if (fragment.begin != expected_begin || fragment.end < fragment.begin ||
        fragment.end > buffer.records.size()) {
      throw Error(ErrorCode::kSliceMismatch, "fragments do not partition the buffer");
    }
    for (std::size_t i = fragment.begin; i + 1 < fragment.end; ++i) {
      if (buffer.records[i].terminal_kind == TerminalKind::kTruncated) {
        throw Error(ErrorCode::kSliceMismatch,
                    "truncated record " + std::to_string(i) + " is not at a fragment end");
      }
    }
    expected_begin = fragment.end;
  }
  if (!buffer.fragments.empty() && expected_begin != buffer.records.size()) {
    throw Error(ErrorCode::kSliceMismatch, "fragments do not cover the buffer");
  }
  for (std::size_t i = 0; i < buffer.records.size(); ++i) {
    const double lp = buffer.records[i].log_prob;
    if (!std::isfinite(lp) || lp > 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "record " + std::to_string(i) + " has log_prob outside (-inf, 0]");
    }
  }
}

std::vector<EpisodeSlice> episode_slices(const RolloutBuffer& buffer) {
  std::vector<EpisodeSlice> slices;
  if (buffer.records.empty()) return slices;
  std::vector<Fragment> fragments = buffer.fragments;
  if (fragments.empty()) fragments.push_back({0, buffer.records.size(), 0.0, 0.0});
  for (std::size_t f = 0; f < fragments.size(); ++f) {
    std::size_t start = fragments[f].begin;
    for (std::size_t i = fragments[f].begin; i < fragments[f].end; ++i) {
      const TerminalKind kind = buffer.records[i].terminal_kind;
      if (kind != TerminalKind::kNone || i + 1 == fragments[f].end) {
        slices.push_back({start, i, kind, f});
        start = i + 1;
      }
    }
  }
  return slices;
}

}  // namespace eapo
