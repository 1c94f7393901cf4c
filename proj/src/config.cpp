#include "eapo/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "eapo/error.hpp"

namespace eapo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::kConfig, key + ": expected " + want + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, value, "a number");
  return out;
}

long long to_int(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, value, "an integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, value, "an unsigned integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, value, "true or false");
}

std::vector<int> to_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(static_cast<int>(to_int(key, item)));
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  std::string key;
  Setter set;
  Getter get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back({"run.env", [](RunConfig& c, const std::string&, const std::string& v) { c.env = trim(v); },
                 [](const RunConfig& c) { return c.env; }});
    t.push_back({"run.algo", [](RunConfig& c, const std::string&, const std::string& v) { c.algo = parse_algo(trim(v)); },
                 [](const RunConfig& c) { return std::string(algo_name(c.algo)); }});
    t.push_back({"run.seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = to_u64(k, v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.push_back({"run.total_timesteps",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.total_timesteps = to_int(k, v); },
                 [](const RunConfig& c) { return std::to_string(c.total_timesteps); }});
    t.push_back({"run.num_envs", [](RunConfig& c, const std::string& k, const std::string& v) { c.num_envs = static_cast<int>(to_int(k, v)); },
                 [](const RunConfig& c) { return std::to_string(c.num_envs); }});
    t.push_back({"run.num_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.num_steps = static_cast<int>(to_int(k, v)); },
                 [](const RunConfig& c) { return std::to_string(c.num_steps); }});
    t.push_back({"run.eval_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_every = to_int(k, v); },
                 [](const RunConfig& c) { return std::to_string(c.eval_every); }});
    t.push_back({"run.eval_episodes",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_episodes = static_cast<int>(to_int(k, v)); },
                 [](const RunConfig& c) { return std::to_string(c.eval_episodes); }});
    t.push_back({"run.output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
                 [](const RunConfig& c) { return c.output_dir; }});

    auto est = [&t](const char* key, double EstimatorConfig::*m) {
      t.push_back({key, [m](RunConfig& c, const std::string& k, const std::string& v) { c.estimator.*m = to_double(k, v); },
                   [m](const RunConfig& c) { return fmt(c.estimator.*m); }});
    };
    est("estimator.gamma_v", &EstimatorConfig::gamma_v);
    est("estimator.lambda_v", &EstimatorConfig::lambda_v);
    est("estimator.gamma_h", &EstimatorConfig::gamma_h);
    est("estimator.lambda_h", &EstimatorConfig::lambda_h);
    est("estimator.tau", &EstimatorConfig::tau);
    est("estimator.clip_epsilon", &EstimatorConfig::clip_epsilon);
    est("estimator.c1", &EstimatorConfig::c1);
    est("estimator.c2", &EstimatorConfig::c2);
    t.push_back({"estimator.normalize_advantage",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.estimator.normalize_advantage = to_bool(k, v); },
                 [](const RunConfig& c) { return std::string(c.estimator.normalize_advantage ? "true" : "false"); }});

    auto ppo_int = [&t](const char* key, int PpoUpdateConfig::*m) {
      t.push_back({key, [m](RunConfig& c, const std::string& k, const std::string& v) { c.ppo.*m = static_cast<int>(to_int(k, v)); },
                   [m](const RunConfig& c) { return std::to_string(c.ppo.*m); }});
    };
    auto ppo_dbl = [&t](const char* key, double PpoUpdateConfig::*m) {
      t.push_back({key, [m](RunConfig& c, const std::string& k, const std::string& v) { c.ppo.*m = to_double(k, v); },
                   [m](const RunConfig& c) { return fmt(c.ppo.*m); }});
    };
    ppo_int("ppo.epochs", &PpoUpdateConfig::epochs);
    ppo_int("ppo.minibatch_size", &PpoUpdateConfig::minibatch_size);
    ppo_dbl("ppo.max_grad_norm", &PpoUpdateConfig::max_grad_norm);
    ppo_dbl("ppo.learning_rate", &PpoUpdateConfig::learning_rate);
    ppo_dbl("ppo.entropy_coef", &PpoUpdateConfig::entropy_coef);

    auto trpo_int = [&t](const char* key, int TrpoUpdateConfig::*m) {
      t.push_back({key, [m](RunConfig& c, const std::string& k, const std::string& v) { c.trpo.*m = static_cast<int>(to_int(k, v)); },
                   [m](const RunConfig& c) { return std::to_string(c.trpo.*m); }});
    };
    auto trpo_dbl = [&t](const char* key, double TrpoUpdateConfig::*m) {
      t.push_back({key, [m](RunConfig& c, const std::string& k, const std::string& v) { c.trpo.*m = to_double(k, v); },
                   [m](const RunConfig& c) { return fmt(c.trpo.*m); }});
    };
    trpo_dbl("trpo.kl_delta", &TrpoUpdateConfig::kl_delta);
    trpo_int("trpo.cg_iters", &TrpoUpdateConfig::cg_iters);
    trpo_dbl("trpo.cg_damping", &TrpoUpdateConfig::cg_damping);
    trpo_dbl("trpo.backtrack_coeff", &TrpoUpdateConfig::backtrack_coeff);
    trpo_int("trpo.backtrack_steps", &TrpoUpdateConfig::backtrack_steps);
    trpo_dbl("trpo.accept_kl_factor", &TrpoUpdateConfig::accept_kl_factor);
    trpo_int("trpo.critic_epochs", &TrpoUpdateConfig::critic_epochs);
    trpo_int("trpo.critic_minibatch_size", &TrpoUpdateConfig::critic_minibatch_size);
    trpo_dbl("trpo.critic_learning_rate", &TrpoUpdateConfig::critic_learning_rate);
    trpo_dbl("trpo.max_grad_norm", &TrpoUpdateConfig::max_grad_norm);

    t.push_back({"network.hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.hidden = to_int_list(k, v); },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden[i]);
                   return s;
                 }});
    t.push_back({"network.shared_trunk",
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (trim(v) == "auto") c.shared_trunk.reset();
                   else c.shared_trunk = to_bool(k, v);
                 },
                 [](const RunConfig& c) {
                   return std::string(!c.shared_trunk ? "auto" : (*c.shared_trunk ? "true" : "false"));
                 }});
    t.push_back({"network.popart", [](RunConfig& c, const std::string& k, const std::string& v) { c.popart = to_bool(k, v); },
                 [](const RunConfig& c) { return std::string(c.popart ? "true" : "false"); }});
    t.push_back({"network.popart_beta", [](RunConfig& c, const std::string& k, const std::string& v) { c.popart_beta = to_double(k, v); },
                 [](const RunConfig& c) { return fmt(c.popart_beta); }});

    t.push_back({"env.max_steps",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.env_options.max_steps = static_cast<int>(to_int(k, v)); },
                 [](const RunConfig& c) { return std::to_string(c.env_options.max_steps); }});
    t.push_back({"env.modified_turns",
                 [](RunConfig& c, const std::string& k, const std::string& v) { c.env_options.modified_turns = to_bool(k, v); },
                 [](const RunConfig& c) { return std::string(c.env_options.modified_turns ? "true" : "false"); }});
    return t;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return f;
  }
  throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
}

}  // namespace

bool RunConfig::resolved_shared_trunk() const {
  if (shared_trunk) return *shared_trunk;
  return algo != AlgoKind::kEapoTrpo;
}

void RunConfig::validate() const {
  if (env.empty()) throw Error(ErrorCode::kConfig, "run.env is empty");
  if (num_envs <= 0 || num_steps <= 0) throw Error(ErrorCode::kConfig, "num_envs and num_steps must be positive");
  if (total_timesteps < 0) throw Error(ErrorCode::kConfig, "total_timesteps must be >= 0");
  if (total_timesteps > 0 && total_timesteps < steps_per_rollout()) {
    throw Error(ErrorCode::kConfig, "total_timesteps must be 0 or at least num_envs * num_steps");
  }
  if (eval_every <= 0 || eval_episodes <= 0) throw Error(ErrorCode::kConfig, "eval_every and eval_episodes must be positive");
  if (hidden.empty()) throw Error(ErrorCode::kConfig, "network.hidden needs at least one layer");
  for (int h : hidden) {
    if (h <= 0) throw Error(ErrorCode::kConfig, "network.hidden sizes must be positive");
  }
  if (!(popart_beta > 0.0 && popart_beta <= 1.0)) throw Error(ErrorCode::kConfig, "popart_beta must be in (0, 1]");
  if (env_options.max_steps <= 0) throw Error(ErrorCode::kConfig, "env.max_steps must be positive");
  estimator.validate(true);
  ppo.validate();
  trpo.validate();
}

void apply_config_override(RunConfig& config, const std::string& key, const std::string& value) {
  find_field(trim(key)).set(config, trim(key), value);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

RunConfig parse_run_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(ErrorCode::kConfig, std::string("config syntax: ") + e.what());
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error(ErrorCode::kConfig, "key '" + section + "' outside a section");
    }
    for (const auto& [name, node] : body) {
      apply_config_override(config, section + "." + name, node.data());
    }
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  return parse_run_config(in);
}

std::string format_run_config(const RunConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const Field& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) os << '\n';
      os << '[' << s << "]\n";
      section = s;
    }
    os << f.key.substr(dot + 1) << " = " << f.get(config) << '\n';
  }
  return os.str();
}

}  // namespace eapo
