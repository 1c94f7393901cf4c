#include "eapo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "eapo/error.hpp"

namespace eapo {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

int sample_action(const std::vector<double>& log_probs, bool greedy, CounterRng& rng) {
  if (greedy) {
    return static_cast<int>(std::max_element(log_probs.begin(), log_probs.end()) -
                            log_probs.begin());
  }
  std::vector<double> probs(log_probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(log_probs[i]);
  return static_cast<int>(rng.categorical(probs));
}

void write_updates_header(std::ostream& out) {
  out << "update,global_step,policy_loss,value_loss,entropy_loss,approx_kl,clip_fraction,"
         "mean_state_entropy,grad_norm,step_accepted,backtracks,step_kl,final_kl,"
         "surrogate_gain,popart_degenerate,value_mu,value_sigma,entropy_mu,entropy_sigma\n";
}

void write_updates_row(std::ostream& out, int update, long long step, const UpdateDiagnostics& d,
                       const DualHeadNetwork& net) {
  out << update << ',' << step << ',' << num(d.policy_loss) << ',' << num(d.value_loss) << ','
      << num(d.entropy_loss) << ',' << num(d.approx_kl) << ',' << num(d.clip_fraction) << ','
      << num(d.mean_entropy) << ',' << num(d.grad_norm) << ',' << (d.step_accepted ? 1 : 0) << ','
      << d.backtracks << ',' << num(d.step_kl) << ',' << num(d.final_kl) << ','
      << num(d.surrogate_gain) << ',' << (d.popart_degenerate ? 1 : 0) << ','
      << num(net.value_stats.mu) << ',' << num(net.value_stats.sigma()) << ','
      << num(net.entropy_stats.mu) << ',' << num(net.entropy_stats.sigma()) << '\n';
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                      c == '_' || c == '=';
    out += keep ? c : '_';
  }
  return out;
}

}  // namespace

EnvSlot::EnvSlot(std::unique_ptr<Environment> e, CounterRng action, CounterRng reset)
    : env(std::move(e)), action_rng(action), reset_rng(reset) {}

std::vector<EnvSlot> make_env_slots(const std::string& env_name, const EnvOptions& options,
                                    int num_envs, std::uint64_t seed) {
  std::vector<EnvSlot> slots;
  slots.reserve(static_cast<std::size_t>(num_envs));
  for (int i = 0; i < num_envs; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    slots.emplace_back(make_environment(env_name, options),
                       CounterRng::derive(seed, idx, StreamPurpose::kRollout),
                       CounterRng::derive(seed, idx, StreamPurpose::kEnvReset));
  }
  return slots;
}

RolloutBuffer collect_rollout(std::vector<EnvSlot>& slots, const DualHeadNetwork& net,
                              int num_steps, bool greedy, std::vector<EpisodeStats>* finished) {
  RolloutBuffer buffer;
  buffer.records.reserve(slots.size() * static_cast<std::size_t>(num_steps));
  for (EnvSlot& slot : slots) {
    if (slot.observation.empty()) slot.observation = slot.env->reset(slot.reset_rng);
    std::vector<StepRecord> steps;
    for (int t = 0; t < num_steps; ++t) {
      const NetOutput out = net.forward(slot.observation);
      const std::vector<double> log_probs = log_softmax(out.logits);
      StepRecord rec;
      rec.action = sample_action(log_probs, greedy, slot.action_rng);
      rec.log_prob = log_probs[static_cast<std::size_t>(rec.action)];
      rec.value_pred = net.denormalized_value(out.value_norm);
      rec.entropy_value_pred = net.denormalized_entropy(out.entropy_value_norm);
      rec.observation = std::move(slot.observation);

      EnvStepOutcome outcome = slot.env->step(rec.action);
      rec.reward = outcome.reward;
      rec.terminal_kind = outcome.terminal_kind;
      slot.running.episodic_return += rec.reward;
      slot.running.trajectory_entropy -= rec.log_prob;
      slot.running.length += 1;
      const TerminalKind kind = rec.terminal_kind;
      steps.push_back(std::move(rec));

      if (kind == TerminalKind::kNone) {
        slot.observation = std::move(outcome.observation);
        continue;
      }
      if (finished != nullptr) finished->push_back(slot.running);
      slot.running = EpisodeStats{};
      if (kind == TerminalKind::kTruncated) {
        const NetOutput boot = net.forward(outcome.observation);
        buffer.add_fragment(std::move(steps), net.denormalized_value(boot.value_norm),
                            net.denormalized_entropy(boot.entropy_value_norm));
        steps.clear();
      }
      slot.observation = slot.env->reset(slot.reset_rng);
    }
    if (!steps.empty()) {
      const NetOutput boot = net.forward(slot.observation);
      buffer.add_fragment(std::move(steps), net.denormalized_value(boot.value_norm),
                          net.denormalized_entropy(boot.entropy_value_norm));
    }
  }
  return buffer;
}

double trajectory_entropy(std::span<const StepRecord> episode) {
  if (episode.empty() || episode.back().terminal_kind == TerminalKind::kNone) {
    throw Error(ErrorCode::kIncompleteEpisode, "episode does not end with a terminal record");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < episode.size(); ++i) {
    if (i + 1 < episode.size() && episode[i].terminal_kind != TerminalKind::kNone) {
      throw Error(ErrorCode::kIncompleteEpisode, "terminal record inside the episode");
    }
    total -= episode[i].log_prob;
  }
  return total;
}

std::vector<double> visitation_heatmap(const std::vector<std::vector<GridCell>>& episodes,
                                       int grid_size) {
  if (grid_size <= 0) throw Error(ErrorCode::kInvalidArgument, "heatmap needs a grid size");
  const auto g = static_cast<std::size_t>(grid_size);
  std::vector<double> counts(g * g, 0.0);
  double total = 0.0;
  for (const auto& episode : episodes) {
    for (const GridCell& c : episode) {
      if (c.x < 0 || c.y < 0 || c.x >= grid_size || c.y >= grid_size) {
        throw Error(ErrorCode::kIndexOutOfRange, "cell outside the grid");
      }
      counts[static_cast<std::size_t>(c.y) * g + static_cast<std::size_t>(c.x)] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (double& c : counts) c /= total;
  }
  return counts;
}

void write_heatmap_csv(std::ostream& out, std::span<const double> heatmap, int grid_size) {
  const auto g = static_cast<std::size_t>(grid_size);
  out << "# eapo-heatmap v1; rows are y, columns are x\n";
  for (std::size_t y = 0; y < g; ++y) {
    for (std::size_t x = 0; x < g; ++x) out << (x ? "," : "") << num(heatmap[y * g + x]);
    out << '\n';
  }
}

EvalResult evaluate(const DualHeadNetwork& net, const Environment& prototype, int episodes,
                    std::uint64_t seed, bool greedy, std::uint64_t round, StreamPurpose purpose) {
  EvalResult result;
  std::unique_ptr<Environment> env = prototype.clone();
  const bool grid = env->grid_size() > 0;
  for (int i = 0; i < episodes; ++i) {
    CounterRng rng = CounterRng::derive(seed, (round << 20) | static_cast<std::uint64_t>(i), purpose);
    std::vector<double> obs = env->reset(rng);
    EpisodeStats stats;
    std::vector<GridCell> cells;
    if (grid) cells.push_back(*env->cell());
    while (!env->done()) {
      const NetOutput out = net.forward(obs);
      const std::vector<double> log_probs = log_softmax(out.logits);
      const int action = sample_action(log_probs, greedy, rng);
      EnvStepOutcome step = env->step(action);
      stats.episodic_return += step.reward;
      stats.trajectory_entropy -= log_probs[static_cast<std::size_t>(action)];
      stats.length += 1;
      if (grid) cells.push_back(*env->cell());
      obs = std::move(step.observation);
    }
    result.episodes.push_back(stats);
    if (grid) result.cells.push_back(std::move(cells));
  }
  if (!result.episodes.empty()) {
    for (const EpisodeStats& e : result.episodes) {
      result.mean_return += e.episodic_return;
      result.mean_entropy += e.trajectory_entropy;
      result.mean_length += e.length;
    }
    const double n = static_cast<double>(result.episodes.size());
    result.mean_return /= n;
    result.mean_entropy /= n;
    result.mean_length /= n;
  }
  return result;
}

void write_metrics_header(std::ostream& out) {
  out << kMetricsSchema << '\n'
      << "global_step,updates,mean_episodic_return,mean_trajectory_entropy,mean_episode_length,"
         "policy_loss,value_loss,entropy_loss,approx_kl,mean_state_entropy\n";
}

void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  out << r.global_step << ',' << r.updates << ',' << num(r.mean_episodic_return) << ','
      << num(r.mean_trajectory_entropy) << ',' << num(r.mean_episode_length) << ','
      << num(r.policy_loss) << ',' << num(r.value_loss) << ',' << num(r.entropy_loss) << ','
      << num(r.approx_kl) << ',' << num(r.mean_state_entropy) << '\n';
}

DualHeadNetwork make_network(const RunConfig& config, const Environment& env) {
  NetworkConfig nc;
  nc.input_size = env.observation_size();
  nc.num_actions = env.num_actions();
  nc.hidden = config.hidden;
  nc.shared_trunk = config.resolved_shared_trunk();
  DualHeadNetwork net(nc);
  net.value_stats.beta = config.popart_beta;
  net.entropy_stats.beta = config.popart_beta;
  CounterRng init = CounterRng::derive(config.seed, 0, StreamPurpose::kInit);
  net.initialize(init);
  return net;
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  std::vector<EnvSlot> slots =
      make_env_slots(config.env, config.env_options, config.num_envs, config.seed);
  const std::unique_ptr<Environment> eval_env = make_environment(config.env, config.env_options);
  DualHeadNetwork net = make_network(config, *eval_env);

  PpoUpdateConfig ppo = config.ppo;
  ppo.popart = config.popart;
  TrpoUpdateConfig trpo = config.trpo;
  trpo.popart = config.popart;
  AdamConfig adam;
  adam.learning_rate =
      config.algo == AlgoKind::kEapoTrpo ? trpo.critic_learning_rate : ppo.learning_rate;
  AdamOptimizer optimizer(net.num_params(), adam);
  CounterRng shuffle = CounterRng::derive(config.seed, 0, StreamPurpose::kShuffle);

  const std::filesystem::path dir(config.output_dir);
  std::ofstream metrics, updates, timing;
  if (options.write_files) {
    std::filesystem::create_directories(dir);
    std::ofstream cfg_out = open_output(dir / "config.ini");
    cfg_out << format_run_config(config);
    metrics = open_output(dir / "metrics.csv");
    write_metrics_header(metrics);
    updates = open_output(dir / "updates.csv");
    write_updates_header(updates);
    timing = open_output(dir / "timing.csv");
    timing << "global_step,wall_seconds\n";
  }

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  long long next_eval = config.eval_every;
  std::uint64_t eval_round = 0;
  while (result.global_step < config.total_timesteps) {
    const RolloutBuffer buffer = collect_rollout(slots, net, config.num_steps);
    result.global_step += static_cast<long long>(buffer.size());
    UpdateDiagnostics diag;
    try {
      switch (config.algo) {
        case AlgoKind::kEapoPpo:
          diag = eapo_ppo_update(net, optimizer, buffer, config.estimator, ppo, shuffle);
          break;
        case AlgoKind::kEapoTrpo:
          diag = eapo_trpo_update(net, optimizer, buffer, config.estimator, trpo, shuffle);
          break;
        case AlgoKind::kPpoEntropyBonus:
          diag = baseline_ppo_entropy_bonus(net, optimizer, buffer, config.estimator, ppo, shuffle);
          break;
        case AlgoKind::kPpoEntropyReward:
          diag = baseline_entropy_reward_ppo(net, optimizer, buffer, config.estimator, ppo, shuffle);
          break;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFiniteLoss) throw;
      throw Error(ErrorCode::kNonFiniteLoss,
                  std::string(e.what()) + " at global step " + std::to_string(result.global_step));
    }
    result.updates.push_back(diag);
    if (options.write_files) {
      write_updates_row(updates, static_cast<int>(result.updates.size()), result.global_step, diag,
                        net);
    }

    if (result.global_step >= next_eval || result.global_step >= config.total_timesteps) {
      while (next_eval <= result.global_step) next_eval += config.eval_every;
      const EvalResult eval =
          evaluate(net, *eval_env, config.eval_episodes, config.seed, false, eval_round++);
      MetricsRow row;
      row.global_step = result.global_step;
      row.updates = static_cast<int>(result.updates.size());
      row.mean_episodic_return = eval.mean_return;
      row.mean_trajectory_entropy = eval.mean_entropy;
      row.mean_episode_length = eval.mean_length;
      row.policy_loss = diag.policy_loss;
      row.value_loss = diag.value_loss;
      row.entropy_loss = diag.entropy_loss;
      row.approx_kl = diag.approx_kl;
      row.mean_state_entropy = diag.mean_entropy;
      result.rows.push_back(row);
      if (options.write_files) {
        write_metrics_row(metrics, row);
        metrics.flush();
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        timing << row.global_step << ',' << num(secs) << '\n';
      }
      if (options.on_row) options.on_row(row);
    }
  }

  result.checkpoint =
      make_checkpoint(net, config.env, config.env_options, config.seed, result.global_step);
  if (options.write_files) save_checkpoint((dir / "checkpoint.bin").string(), result.checkpoint);
  return result;
}

std::vector<GridAxis> parse_grid(std::istream& in) {
  std::vector<GridAxis> grid;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "grid line " + std::to_string(line_no) + ": expected key = values");
    }
    GridAxis axis;
    axis.key = trim(t.substr(0, eq));
    std::stringstream values(t.substr(eq + 1));
    std::string v;
    while (std::getline(values, v, ',')) {
      if (!trim(v).empty()) axis.values.push_back(trim(v));
    }
    if (axis.key.empty() || axis.values.empty()) {
      throw Error(ErrorCode::kConfig, "grid line " + std::to_string(line_no) + " has no values");
    }
    RunConfig probe;
    apply_config_override(probe, axis.key, axis.values.front());
    grid.push_back(std::move(axis));
  }
  return grid;
}

std::vector<GridAxis> load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open grid " + path);
  return parse_grid(in);
}

std::pair<double, double> mean_ci95(std::span<const double> values) {
  if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

SweepResult sweep(const RunConfig& base, const std::vector<GridAxis>& grid,
                  const std::vector<std::uint64_t>& seeds, const SweepOptions& options) {
  if (seeds.empty()) throw Error(ErrorCode::kConfig, "sweep needs at least one seed");
  for (const GridAxis& axis : grid) {
    if (axis.values.empty()) throw Error(ErrorCode::kConfig, "grid axis '" + axis.key + "' is empty");
  }
  SweepResult result;
  std::vector<std::size_t> pos(grid.size(), 0);
  while (true) {
    SweepCell cell;
    std::string label;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      cell.overrides.emplace_back(grid[k].key, grid[k].values[pos[k]]);
      label += (k ? "_" : "") + sanitize(grid[k].key + "=" + grid[k].values[pos[k]]);
    }
    if (label.empty()) label = "base";

    std::vector<double> returns, entropies, lengths;
    std::vector<std::uint64_t> ok_seeds;
    for (std::uint64_t seed : seeds) {
      SweepRun run;
      run.overrides = cell.overrides;
      run.seed = seed;
      run.output_dir = (std::filesystem::path(base.output_dir) / label /
                        ("seed_" + std::to_string(seed))).string();
      try {
        RunConfig cfg = base;
        for (const auto& [key, value] : cell.overrides) apply_config_override(cfg, key, value);
        cfg.seed = seed;
        cfg.output_dir = run.output_dir;
        TrainOptions topts;
        topts.write_files = options.write_files;
        const TrainResult tr = train(cfg, topts);
        const std::size_t w = std::min<std::size_t>(
            tr.rows.size(), static_cast<std::size_t>(std::max(1, options.final_window)));
        for (std::size_t i = tr.rows.size() - w; i < tr.rows.size(); ++i) {
          run.mean_return += tr.rows[i].mean_episodic_return;
          run.mean_entropy += tr.rows[i].mean_trajectory_entropy;
          run.mean_length += tr.rows[i].mean_episode_length;
        }
        if (w > 0) {
          run.mean_return /= static_cast<double>(w);
          run.mean_entropy /= static_cast<double>(w);
          run.mean_length /= static_cast<double>(w);
          run.ok = true;
        } else {
          run.error = "no evaluation rows";
        }
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      if (run.ok) {
        cell.runs_ok += 1;
        returns.push_back(run.mean_return);
        entropies.push_back(run.mean_entropy);
        lengths.push_back(run.mean_length);
        ok_seeds.push_back(seed);
      } else {
        cell.runs_failed += 1;
      }
      if (options.on_run) options.on_run(run);
      result.runs.push_back(std::move(run));
    }
    std::tie(cell.return_mean, cell.return_ci95) = mean_ci95(returns);
    std::tie(cell.entropy_mean, cell.entropy_ci95) = mean_ci95(entropies);
    std::tie(cell.length_mean, cell.length_ci95) = mean_ci95(lengths);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < entropies.size(); ++i) {
      const double d = std::abs(entropies[i] - cell.entropy_mean);
      if (d < best) {
        best = d;
        cell.representative_seed = ok_seeds[i];
      }
    }
    result.cells.push_back(std::move(cell));

    bool advanced = false;
    for (std::size_t k = grid.size(); k-- > 0;) {
      if (++pos[k] < grid[k].values.size()) {
        advanced = true;
        break;
      }
      pos[k] = 0;
    }
    if (!advanced) break;
  }

  if (options.write_files) {
    std::filesystem::create_directories(base.output_dir);
    std::ofstream summary = open_output(std::filesystem::path(base.output_dir) / "summary.csv");
    write_summary_csv(summary, grid, result.cells);
    std::ofstream runs = open_output(std::filesystem::path(base.output_dir) / "runs.csv");
    runs << "output_dir,seed,ok,mean_episodic_return,mean_trajectory_entropy,mean_episode_length,error\n";
    for (const SweepRun& r : result.runs) {
      std::string err = r.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      runs << r.output_dir << ',' << r.seed << ',' << (r.ok ? 1 : 0) << ',' << num(r.mean_return)
           << ',' << num(r.mean_entropy) << ',' << num(r.mean_length) << ',' << err << '\n';
    }
  }
  return result;
}

void write_summary_csv(std::ostream& out, const std::vector<GridAxis>& grid,
                       const std::vector<SweepCell>& cells) {
  out << kSummarySchema
      << "; final-window means per run; ci95 = 1.96 * sample_sd / sqrt(n) across seeds;"
         " representative_seed = trajectory entropy closest to the mean, lowest index on ties\n";
  for (const GridAxis& axis : grid) out << axis.key << ',';
  out << "runs_ok,runs_failed,return_mean,return_ci95,entropy_mean,entropy_ci95,length_mean,"
         "length_ci95,representative_seed\n";
  for (const SweepCell& c : cells) {
    for (const auto& kv : c.overrides) out << kv.second << ',';
    out << c.runs_ok << ',' << c.runs_failed << ',' << num(c.return_mean) << ','
        << num(c.return_ci95) << ',' << num(c.entropy_mean) << ',' << num(c.entropy_ci95) << ','
        << num(c.length_mean) << ',' << num(c.length_ci95) << ',';
    if (c.runs_ok > 0) out << c.representative_seed;
    out << '\n';
  }
}

HeatmapResult checkpoint_heatmap(const Checkpoint& checkpoint, int rollouts, std::uint64_t seed) {
  if (rollouts <= 0) throw Error(ErrorCode::kInvalidArgument, "rollouts must be positive");
  const std::unique_ptr<Environment> env =
      make_environment(checkpoint.env_name, checkpoint.env_options);
  if (env->grid_size() <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "heatmap needs a grid environment");
  }
  const DualHeadNetwork net = restore_network(checkpoint);
  HeatmapResult result;
  result.grid_size = env->grid_size();
  result.eval = evaluate(net, *env, rollouts, seed, false, 0, StreamPurpose::kHeatmap);
  result.frequencies = visitation_heatmap(result.eval.cells, result.grid_size);
  return result;
}

}  // namespace eapo
