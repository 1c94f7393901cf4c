#include "eapo/envs.hpp"

#include <deque>
#include <set>
#include <sstream>

#include "eapo/error.hpp"

namespace eapo {

namespace {

constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};

Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

void check_action(int action, int num_actions) {
  if (action < 0 || action >= num_actions) {
    throw Error(ErrorCode::kActionOutOfRange,
                "action " + std::to_string(action) + " not in [0, " +
                    std::to_string(num_actions) + ")");
  }
}

void check_not_done(bool done) {
  if (done) throw Error(ErrorCode::kInvalidArgument, "step() called on a finished episode");
}

void one_hot_into(std::vector<double>& out, std::size_t offset, int index) {
  out[offset + static_cast<std::size_t>(index)] = 1.0;
}

}  // namespace

double goal_reward(int step_count, int max_steps) {
  return 1.0 - kGoalRewardDecay * static_cast<double>(step_count) / static_cast<double>(max_steps);
}

// ---------------------------------------------------------------- GridEmpty

GridEmptyEnv::GridEmptyEnv(GridEmptyOptions options) : options_(options) {
  if (options_.grid_size < 4) throw Error(ErrorCode::kBadSize, "grid_size must be >= 4");
  if (options_.max_steps < 1) throw Error(ErrorCode::kBadSize, "max_steps must be >= 1");
}

int GridEmptyEnv::observation_size() const { return 2 * (options_.grid_size - 2) + 4; }

std::vector<double> GridEmptyEnv::reset(CounterRng&) { return reset(); }

std::vector<double> GridEmptyEnv::reset() {
  place(1, 1, Heading::kEast, 0);
  return observe();
}

void GridEmptyEnv::place(int x, int y, Heading heading, int step_count) {
  const int hi = options_.grid_size - 2;
  if (x < 1 || x > hi || y < 1 || y > hi) {
    throw Error(ErrorCode::kIndexOutOfRange, "position outside the walls");
  }
  x_ = x;
  y_ = y;
  heading_ = heading;
  t_ = step_count;
  done_ = false;
}

EnvStepOutcome GridEmptyEnv::step(int action) {
  check_not_done(done_);
  check_action(action, kNumActions);
  ++t_;
  bool move = false;
  if (action == 0) {
    heading_ = turn_left(heading_);
    move = options_.modified_turns;
  } else if (action == 1) {
    heading_ = turn_right(heading_);
    move = options_.modified_turns;
  } else if (action == 2) {
    move = true;
  }
  if (move) {
    const int h = static_cast<int>(heading_);
    const int nx = x_ + kDx[h];
    const int ny = y_ + kDy[h];
    const int hi = options_.grid_size - 2;
    if (nx >= 1 && nx <= hi && ny >= 1 && ny <= hi) {
      x_ = nx;
      y_ = ny;
    }
  }
  EnvStepOutcome outcome;
  if (GridCell{x_, y_} == goal()) {
    outcome.reward = goal_reward(t_, options_.max_steps);
    outcome.terminal_kind = TerminalKind::kTerminated;
  } else if (t_ >= options_.max_steps) {
    outcome.terminal_kind = TerminalKind::kTruncated;
  }
  done_ = outcome.terminal_kind != TerminalKind::kNone;
  outcome.observation = observe();
  return outcome;
}

std::vector<double> GridEmptyEnv::observe() const {
  const auto inner = static_cast<std::size_t>(options_.grid_size - 2);
  std::vector<double> obs(static_cast<std::size_t>(observation_size()), 0.0);
  one_hot_into(obs, 0, x_ - 1);
  one_hot_into(obs, inner, y_ - 1);
  one_hot_into(obs, 2 * inner, static_cast<int>(heading_));
  return obs;
}

std::unique_ptr<Environment> GridEmptyEnv::clone() const {
  return std::make_unique<GridEmptyEnv>(*this);
}

std::uint64_t GridEmptyEnv::state_key() const {
  const auto g = static_cast<std::uint64_t>(options_.grid_size);
  return static_cast<std::uint64_t>(x_) +
         g * (static_cast<std::uint64_t>(y_) + g * static_cast<std::uint64_t>(heading_));
}

void GridEmptyEnv::restore(std::uint64_t key, int step_count) {
  const auto g = static_cast<std::uint64_t>(options_.grid_size);
  place(static_cast<int>(key % g), static_cast<int>((key / g) % g),
        static_cast<Heading>((key / (g * g)) % 4), step_count);
}

std::vector<std::pair<std::uint64_t, double>> GridEmptyEnv::initial_states() const {
  GridEmptyEnv start(options_);
  start.reset();
  return {{start.state_key(), 1.0}};
}

int optimal_steps(const GridEmptyOptions& options) {
  GridEmptyEnv env(options);
  env.reset();
  std::deque<std::pair<std::uint64_t, int>> frontier{{env.state_key(), 0}};
  std::set<std::uint64_t> seen{env.state_key()};
  while (!frontier.empty()) {
    const auto [key, depth] = frontier.front();
    frontier.pop_front();
    for (int a = 0; a < GridEmptyEnv::kNumActions; ++a) {
      // The step counter stays far from the cap so only the goal can end the episode.
      env.restore(key, 0);
      const EnvStepOutcome out = env.step(a);
      if (out.terminal_kind == TerminalKind::kTerminated) return depth + 1;
      if (seen.insert(env.state_key()).second) frontier.emplace_back(env.state_key(), depth + 1);
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "goal unreachable");
}

// ------------------------------------------------------------- DoorKeyLite

DoorKeyLiteEnv::DoorKeyLiteEnv(int max_steps) : max_steps_(max_steps) {
  if (max_steps_ < 1) throw Error(ErrorCode::kBadSize, "max_steps must be >= 1");
}

std::vector<double> DoorKeyLiteEnv::reset(CounterRng&) { return reset(); }

std::vector<double> DoorKeyLiteEnv::reset() {
  x_ = 1;
  y_ = 1;
  heading_ = Heading::kEast;
  has_key_ = false;
  door_open_ = false;
  t_ = 0;
  done_ = false;
  return observe();
}

bool DoorKeyLiteEnv::walkable(int x, int y) const {
  if (x < 1 || x > kGridSize - 2 || y < 1 || y > kGridSize - 2) return false;
  if (x == kWallX) return door_open_ && y == kDoor.y;
  return true;
}

EnvStepOutcome DoorKeyLiteEnv::step(int action) {
  check_not_done(done_);
  check_action(action, kNumActions);
  ++t_;
  const int h = static_cast<int>(heading_);
  const int fx = x_ + kDx[h];
  const int fy = y_ + kDy[h];
  switch (action) {
    case 0: heading_ = turn_left(heading_); break;
    case 1: heading_ = turn_right(heading_); break;
    case 2:
      if (walkable(fx, fy)) {
        x_ = fx;
        y_ = fy;
      }
      break;
    case 3:
      if (!has_key_ && GridCell{x_, y_} == kKey) has_key_ = true;
      break;
    case 5:
      if (has_key_ && !door_open_ && GridCell{fx, fy} == kDoor) door_open_ = true;
      break;
    default: break;
  }
  EnvStepOutcome outcome;
  if (GridCell{x_, y_} == kGoal) {
    outcome.reward = goal_reward(t_, max_steps_);
    outcome.terminal_kind = TerminalKind::kTerminated;
  } else if (t_ >= max_steps_) {
    outcome.terminal_kind = TerminalKind::kTruncated;
  }
  done_ = outcome.terminal_kind != TerminalKind::kNone;
  outcome.observation = observe();
  return outcome;
}

std::vector<double> DoorKeyLiteEnv::observe() const {
  std::vector<double> obs(static_cast<std::size_t>(observation_size()), 0.0);
  one_hot_into(obs, 0, x_ - 1);
  one_hot_into(obs, 6, y_ - 1);
  one_hot_into(obs, 12, static_cast<int>(heading_));
  obs[16] = has_key_ ? 1.0 : 0.0;
  obs[17] = door_open_ ? 1.0 : 0.0;
  return obs;
}

std::unique_ptr<Environment> DoorKeyLiteEnv::clone() const {
  return std::make_unique<DoorKeyLiteEnv>(*this);
}

std::uint64_t DoorKeyLiteEnv::state_key() const {
  std::uint64_t key = static_cast<std::uint64_t>(door_open_);
  key = key * 2 + static_cast<std::uint64_t>(has_key_);
  key = key * 4 + static_cast<std::uint64_t>(heading_);
  key = key * kGridSize + static_cast<std::uint64_t>(y_);
  key = key * kGridSize + static_cast<std::uint64_t>(x_);
  return key;
}

void DoorKeyLiteEnv::restore(std::uint64_t key, int step_count) {
  x_ = static_cast<int>(key % kGridSize);
  key /= kGridSize;
  y_ = static_cast<int>(key % kGridSize);
  key /= kGridSize;
  heading_ = static_cast<Heading>(key % 4);
  key /= 4;
  has_key_ = (key % 2) != 0;
  door_open_ = (key / 2) != 0;
  t_ = step_count;
  done_ = false;
}

std::vector<std::pair<std::uint64_t, double>> DoorKeyLiteEnv::initial_states() const {
  DoorKeyLiteEnv start(max_steps_);
  start.reset();
  return {{start.state_key(), 1.0}};
}

// -------------------------------------------------------------- TabularEnv

TabularEnv::TabularEnv(DeterministicTabularMdp mdp, std::string name, int max_steps)
    : mdp_(std::move(mdp)), name_(std::move(name)), max_steps_(max_steps) {
  validate_mdp(mdp_);
  if (max_steps_ < 1) throw Error(ErrorCode::kBadSize, "max_steps must be >= 1");
  for (int s = 0; s < mdp_.num_states; ++s) {
    if (mdp_.is_terminal(s) && mdp_.initial_distribution[static_cast<std::size_t>(s)] > 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "initial distribution puts mass on a terminal state");
    }
  }
}

std::vector<double> TabularEnv::reset(CounterRng& rng) {
  state_ = static_cast<int>(rng.categorical(mdp_.initial_distribution));
  t_ = 0;
  done_ = false;
  return observe();
}

EnvStepOutcome TabularEnv::step(int action) {
  check_not_done(done_);
  check_action(action, mdp_.num_actions);
  ++t_;
  EnvStepOutcome outcome;
  outcome.reward = mdp_.reward_of(state_, action);
  state_ = mdp_.next_state(state_, action);
  if (mdp_.is_terminal(state_)) {
    outcome.terminal_kind = TerminalKind::kTerminated;
  } else if (t_ >= max_steps_) {
    outcome.terminal_kind = TerminalKind::kTruncated;
  }
  done_ = outcome.terminal_kind != TerminalKind::kNone;
  outcome.observation = observe();
  return outcome;
}

std::vector<double> TabularEnv::observe() const {
  std::vector<double> obs(static_cast<std::size_t>(mdp_.num_states), 0.0);
  obs[static_cast<std::size_t>(state_)] = 1.0;
  return obs;
}

std::unique_ptr<Environment> TabularEnv::clone() const {
  return std::make_unique<TabularEnv>(*this);
}

void TabularEnv::restore(std::uint64_t key, int step_count) {
  if (key >= static_cast<std::uint64_t>(mdp_.num_states)) {
    throw Error(ErrorCode::kIndexOutOfRange, "state key out of range");
  }
  state_ = static_cast<int>(key);
  t_ = step_count;
  done_ = false;
}

std::vector<std::pair<std::uint64_t, double>> TabularEnv::initial_states() const {
  std::vector<std::pair<std::uint64_t, double>> out;
  for (int s = 0; s < mdp_.num_states; ++s) {
    const double p = mdp_.initial_distribution[static_cast<std::size_t>(s)];
    if (p > 0.0) out.emplace_back(static_cast<std::uint64_t>(s), p);
  }
  return out;
}

// --------------------------------------------------------- MDP generators

DeterministicTabularMdp chain_mdp(int n, int k) {
  if (n < 2 || k < 2) throw Error(ErrorCode::kBadSize, "chain_mdp needs n >= 2 and k >= 2");
  DeterministicTabularMdp mdp;
  mdp.num_states = n;
  mdp.num_actions = k;
  mdp.transition.resize(static_cast<std::size_t>(n * k));
  mdp.reward.assign(static_cast<std::size_t>(n * k), 0.0);
  mdp.initial_distribution.assign(static_cast<std::size_t>(n), 0.0);
  mdp.initial_distribution[0] = 1.0;
  mdp.terminal_mask.assign(static_cast<std::size_t>(n), 0);
  mdp.terminal_mask[static_cast<std::size_t>(n - 1)] = 1;
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < k; ++a) {
      const bool moves = a == 0 && s < n - 1;
      const int next = moves ? s + 1 : s;
      mdp.transition[mdp.index(s, a)] = next;
      mdp.reward[mdp.index(s, a)] = (moves && next == n - 1) ? 1.0 : 0.0;
    }
  }
  return mdp;
}

DeterministicTabularMdp random_tabular_mdp(std::uint64_t seed, int num_states, int num_actions) {
  if (num_states < 2 || num_states > 10 || num_actions < 1 || num_actions > 4) {
    throw Error(ErrorCode::kBadSize, "random_tabular_mdp needs 2 <= S <= 10 and 1 <= A <= 4");
  }
  CounterRng rng = CounterRng::derive(seed, 0, StreamPurpose::kMdpGen);
  DeterministicTabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  const auto cells = static_cast<std::size_t>(num_states * num_actions);
  mdp.transition.resize(cells);
  mdp.reward.resize(cells);
  const auto terminal = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_states)));
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      mdp.transition[mdp.index(s, a)] =
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_states)));
      mdp.reward[mdp.index(s, a)] = rng.uniform(-1.0, 1.0);
    }
  }
  for (int a = 0; a < num_actions; ++a) {
    mdp.transition[mdp.index(terminal, a)] = terminal;
    mdp.reward[mdp.index(terminal, a)] = 0.0;
  }
  mdp.terminal_mask.assign(static_cast<std::size_t>(num_states), 0);
  mdp.terminal_mask[static_cast<std::size_t>(terminal)] = 1;
  mdp.initial_distribution.assign(static_cast<std::size_t>(num_states),
                                  1.0 / static_cast<double>(num_states - 1));
  mdp.initial_distribution[static_cast<std::size_t>(terminal)] = 0.0;
  return mdp;
}

// ------------------------------------------------------------------ export

int ExportedMdp::state_of(std::uint64_t key, int t) const {
  const auto it = index.find({key, t});
  return it == index.end() ? -1 : it->second;
}

ExportedMdp export_tabular(const Environment& env, ExportOptions options) {
  ExportedMdp out;
  if (const DeterministicTabularMdp* tab = env.as_tabular();
      tab != nullptr && !options.time_augmented) {
    out.mdp = *tab;
    std::unique_ptr<Environment> probe = env.clone();
    for (int s = 0; s < tab->num_states; ++s) {
      out.keys.push_back(static_cast<std::uint64_t>(s));
      out.times.push_back(0);
      out.index[{static_cast<std::uint64_t>(s), 0}] = s;
      probe->restore(static_cast<std::uint64_t>(s), 0);
      out.observations.push_back(tab->is_terminal(s) ? std::vector<double>{}
                                                     : probe->observe());
      if (tab->is_terminal(s) && out.sink < 0) out.sink = s;
    }
    return out;
  }

  const int num_actions = env.num_actions();
  std::unique_ptr<Environment> probe = env.clone();
  std::deque<int> frontier;

  // State 0 is the shared absorbing sink.
  out.sink = 0;
  out.keys.push_back(0);
  out.times.push_back(-1);
  out.observations.emplace_back();

  auto intern = [&](std::uint64_t key, int t) {
    const auto [it, inserted] = out.index.try_emplace({key, t}, static_cast<int>(out.keys.size()));
    if (inserted) {
      if (out.keys.size() >= options.max_states) {
        throw Error(ErrorCode::kStateSpaceTooLarge,
                    "export exceeds " + std::to_string(options.max_states) + " states");
      }
      out.keys.push_back(key);
      out.times.push_back(t);
      probe->restore(key, t);
      out.observations.push_back(probe->observe());
      frontier.push_back(it->second);
    }
    return it->second;
  };

  std::vector<std::pair<int, double>> initial;
  for (const auto& [key, p] : env.initial_states()) initial.emplace_back(intern(key, 0), p);

  struct Edge {
    int next;
    double reward;
  };
  std::vector<std::vector<Edge>> edges(1, std::vector<Edge>(static_cast<std::size_t>(num_actions),
                                                            Edge{0, 0.0}));
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    const auto su = static_cast<std::size_t>(s);
    if (edges.size() <= su) edges.resize(su + 1);
    edges[su].resize(static_cast<std::size_t>(num_actions));
    const std::uint64_t key = out.keys[su];
    const int t = out.times[su];
    for (int a = 0; a < num_actions; ++a) {
      probe->restore(key, t);
      const EnvStepOutcome step = probe->step(a);
      Edge edge{0, step.reward};
      if (step.terminal_kind == TerminalKind::kTerminated) {
        edge.next = out.sink;
      } else if (options.time_augmented) {
        edge.next = step.terminal_kind == TerminalKind::kTruncated
                        ? out.sink
                        : intern(probe->state_key(), t + 1);
      } else {
        edge.next = intern(probe->state_key(), 0);
      }
      edges[su][static_cast<std::size_t>(a)] = edge;
    }
  }

  DeterministicTabularMdp& mdp = out.mdp;
  mdp.num_states = static_cast<int>(out.keys.size());
  mdp.num_actions = num_actions;
  mdp.transition.resize(static_cast<std::size_t>(mdp.num_states) * static_cast<std::size_t>(num_actions));
  mdp.reward.resize(mdp.transition.size());
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      const Edge& e = edges[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
      mdp.transition[mdp.index(s, a)] = s == out.sink ? out.sink : e.next;
      mdp.reward[mdp.index(s, a)] = s == out.sink ? 0.0 : e.reward;
    }
  }
  mdp.initial_distribution.assign(static_cast<std::size_t>(mdp.num_states), 0.0);
  for (const auto& [s, p] : initial) mdp.initial_distribution[static_cast<std::size_t>(s)] += p;
  mdp.terminal_mask.assign(static_cast<std::size_t>(mdp.num_states), 0);
  mdp.terminal_mask[static_cast<std::size_t>(out.sink)] = 1;
  return out;
}

std::optional<int> bfs_shortest_path(const DeterministicTabularMdp& mdp) {
  std::vector<int> depth(static_cast<std::size_t>(mdp.num_states), -1);
  std::deque<int> frontier;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (mdp.initial_distribution[static_cast<std::size_t>(s)] > 0.0) {
      if (mdp.is_terminal(s)) return 0;
      depth[static_cast<std::size_t>(s)] = 0;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    for (int a = 0; a < mdp.num_actions; ++a) {
      const int next = mdp.next_state(s, a);
      auto& d = depth[static_cast<std::size_t>(next)];
      if (d >= 0) continue;
      d = depth[static_cast<std::size_t>(s)] + 1;
      if (mdp.is_terminal(next)) return d;
      frontier.push_back(next);
    }
  }
  return std::nullopt;
}

// ----------------------------------------------------------------- factory

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(text);
  while (std::getline(in, part, sep)) parts.push_back(part);
  return parts;
}

long long parse_int(const std::string& text, const std::string& whole) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, "bad integer in environment name '" + whole + "'");
  }
}

}  // namespace

std::unique_ptr<Environment> make_environment(const std::string& name, EnvOptions options) {
  if (name == "grid_empty") {
    GridEmptyOptions grid;
    grid.max_steps = options.max_steps;
    grid.modified_turns = options.modified_turns;
    return std::make_unique<GridEmptyEnv>(grid);
  }
  if (name == "doorkey_lite") return std::make_unique<DoorKeyLiteEnv>(options.max_steps);
  const auto parts = split(name, ':');
  if (parts.size() == 3 && parts[0] == "chain") {
    const auto n = static_cast<int>(parse_int(parts[1], name));
    const auto k = static_cast<int>(parse_int(parts[2], name));
    return std::make_unique<TabularEnv>(chain_mdp(n, k), name, options.max_steps);
  }
  if (parts.size() == 4 && parts[0] == "random") {
    const auto seed = static_cast<std::uint64_t>(parse_int(parts[1], name));
    const auto s = static_cast<int>(parse_int(parts[2], name));
    const auto a = static_cast<int>(parse_int(parts[3], name));
    return std::make_unique<TabularEnv>(random_tabular_mdp(seed, s, a), name, options.max_steps);
  }
  throw Error(ErrorCode::kConfig, "unknown environment '" + name + "'");
}

}  // namespace eapo
