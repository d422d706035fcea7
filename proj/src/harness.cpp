#include "wq/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "wq/mev.hpp"

namespace fs = std::filesystem;

namespace wq::harness {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config field '" + key + "': not a number: " + v);
  }
}

long to_long(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config field '" + key + "': not an integer: " + v);
  }
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> seeds;
  const auto range = v.find("..");
  if (range != std::string::npos) {
    const long lo = to_long(trim(v.substr(0, range)), "seeds");
    const long hi = to_long(trim(v.substr(range + 2)), "seeds");
    for (long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  } else {
    for (const auto& tok : split(v, ','))
      if (!trim(tok).empty()) seeds.push_back(static_cast<std::uint64_t>(to_long(trim(tok), "seeds")));
  }
  if (seeds.empty()) throw std::invalid_argument("config field 'seeds': at least one seed required");
  return seeds;
}

agent::Algo parse_deep_algo(const std::string& name) {
  if (name == "DQN") return agent::Algo::DQN;
  if (name == "DDQN") return agent::Algo::DDQN;
  if (name == "DropDQN") return agent::Algo::DropDQN;
  if (name == "WDQN") return agent::Algo::WDQN;
  if (name == "WDQN-TS") return agent::Algo::WDQN_TS;
  throw std::invalid_argument("unknown deep algorithm: " + name +
                              " (known: DQN DDQN DropDQN WDQN WDQN-TS)");
}

}  // namespace

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> profile_names() { return {"asterix-like", "lunar-like", "minatar-like"}; }

Profile load_profile(const std::string& name) {
  Profile p;
  p.name = name;
  p.agent.adam.beta1 = 0.9;
  p.agent.adam.beta2 = 0.999;
  if (name == "asterix-like") {
    p.agent.adam.lr = 5e-5;
    p.agent.adam.epsilon = 0.01 / 32.0;
    p.agent.batch_size = 32;
    p.agent.loss = net::LossKind::Huber;
    p.agent.train_frequency = 4;
    p.agent.target_period = 10000;
    p.agent.memory_min = 50000;
    p.agent.memory_max = 1000000;
    p.agent.gamma = 0.99;
    p.agent.eps = {1.0, 0.1, 1000000, 0.001};
    p.agent.mc_samples = 100;
    p.hidden_widths = {100, 100};
    p.weight_decay = 1e-6;
    p.dropout_reg = 5e-4;
    p.dropout_p = 0.5;
    p.last_hidden_only = true;
  } else if (name == "lunar-like") {
    p.agent.adam.lr = 3e-4;
    p.agent.adam.epsilon = 1e-8;
    p.agent.batch_size = 32;
    p.agent.loss = net::LossKind::Mse;
    p.agent.train_frequency = 1;
    p.agent.target_period = 300;
    p.agent.memory_min = 250;
    p.agent.memory_max = 10000;
    p.agent.gamma = 0.99;
    p.agent.eps = {1.0, 0.01, 1000, 0.0};
    p.agent.mc_samples = 50;
    p.hidden_widths = {100, 100};
    p.weight_decay = 1e-6;
    p.dropout_reg = 2.5e-3;
    p.dropout_p = 0.2;
    p.last_hidden_only = false;
  } else if (name == "minatar-like") {
    p.agent.adam.lr = 1e-4;
    p.agent.adam.epsilon = 1e-8;
    p.agent.batch_size = 32;
    p.agent.loss = net::LossKind::Huber;
    p.agent.train_frequency = 1;
    p.agent.target_period = 1000;
    p.agent.memory_min = 5000;
    p.agent.memory_max = 100000;
    p.agent.gamma = 0.99;
    p.agent.eps = {1.0, 0.1, 100000, 0.0};
    p.agent.mc_samples = 100;
    p.hidden_widths = {128};
    p.weight_decay = 1e-6;
    p.dropout_reg = 1e-4;
    p.dropout_p = 0.1;
    p.last_hidden_only = false;
  } else {
    std::string known;
    for (const auto& n : profile_names()) known += " " + n;
    throw std::invalid_argument("unknown profile '" + name + "'; known profiles:" + known);
  }
  return p;
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  cfg.raw[key] = value;
  if (key == "kind") {
    if (value == "estimators") cfg.kind = ExperimentKind::Estimators;
    else if (value == "tabular") cfg.kind = ExperimentKind::Tabular;
    else if (value == "deep") cfg.kind = ExperimentKind::Deep;
    else throw std::invalid_argument("config field 'kind': must be estimators|tabular|deep");
  } else if (key == "algorithms") {
    cfg.algorithms.clear();
    for (const auto& a : split(value, ','))
      if (!trim(a).empty()) cfg.algorithms.push_back(trim(a));
  } else if (key == "seeds") {
    cfg.seeds = parse_seeds(value);
  } else if (key == "epochs") {
    cfg.epochs = to_long(value, key);
    if (cfg.epochs < 0) throw std::invalid_argument("config field 'epochs': must be >= 0");
  } else if (key == "steps_per_epoch") {
    cfg.steps_per_epoch = to_long(value, key);
    if (cfg.steps_per_epoch < 1)
      throw std::invalid_argument("config field 'steps_per_epoch': must be >= 1");
  } else if (key == "eval_episodes") {
    cfg.eval_episodes = static_cast<int>(to_long(value, key));
  } else if (key == "out") {
    cfg.out_dir = value;
  } else if (key == "profile") {
    load_profile(value);  // validate now
    cfg.profile = value;
  } else if (key == "env") {
    cfg.env = value;
  } else if (key == "sticky") {
    cfg.sticky = to_double(value, key);
  } else if (key == "lander_noise") {
    cfg.lander_noise = to_double(value, key);
  } else if (key == "alpha") {
    cfg.alpha = to_double(value, key);
  } else if (key == "epsilon") {
    cfg.epsilon = to_double(value, key);
  } else if (key == "quad_intervals") {
    cfg.quad_intervals = static_cast<int>(to_long(value, key));
  } else if (key == "map") {
    cfg.map_file = value;
  } else if (key == "estimators_mode") {
    if (value != "bias" && value != "closedform")
      throw std::invalid_argument("config field 'estimators_mode': must be bias|closedform");
    cfg.estimators_mode = value;
  } else if (key == "M") {
    cfg.n_variables = static_cast<int>(to_long(value, key));
  } else if (key == "n") {
    cfg.n_samples = static_cast<int>(to_long(value, key));
  } else if (key == "trials") {
    cfg.trials = to_long(value, key);
  } else if (key == "mc_draws") {
    cfg.mc_draws = to_long(value, key);
  } else {
    throw std::invalid_argument("unknown config field '" + key + "'");
  }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  int line_no = 0;
  for (const auto& raw_line : split(text, '\n')) {
    ++line_no;
    std::string line = raw_line;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": expected 'key = value'");
    try {
      apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

const char* kMetricsHeader = "seed,epoch,eval_return,predicted_value,realized_return,weight_entropy";

std::string format_metrics_row(const MetricsRow& row) {
  std::string s = std::to_string(row.seed) + "," + std::to_string(row.epoch) + "," +
                  fmt_double(row.eval_return) + "," + fmt_double(row.predicted_value) + "," +
                  fmt_double(row.realized_return) + ",";
  if (row.weight_entropy) s += fmt_double(*row.weight_entropy);
  return s;
}

namespace {

void write_metrics_file(const fs::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open metrics file for writing: " + path.string());
  out << kMetricsHeader << "\n";
  for (const auto& r : rows) out << format_metrics_row(r) << "\n";
  if (!out) throw std::runtime_error("write failure: " + path.string());
}

void write_manifest(const fs::path& path, const ExperimentConfig& cfg,
                    const std::string& algorithm, std::uint64_t seed, double wall_seconds) {
  nlohmann::json j;
  j["format"] = "wq-run-v1";
  j["algorithm"] = algorithm;
  j["seed"] = seed;
  j["wall_clock_s"] = wall_seconds;
  j["config"] = cfg.raw;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

void write_resolved_config(const ExperimentConfig& cfg) {
  std::ofstream out(fs::path(cfg.out_dir) / "config_resolved.txt");
  for (const auto& [k, v] : cfg.raw) out << k << " = " << v << "\n";
}

// ---------------------------------------------------------------- estimators

void run_estimators(const ExperimentConfig& cfg) {
  const std::uint64_t base_seed = cfg.seeds.front();
  if (cfg.estimators_mode == "closedform") {
    // 10x10 grid over (mu1, se1) against a fixed N(0,1) belief.
    std::ofstream out(fs::path(cfg.out_dir) / "estimators_closedform.csv");
    out << "mu1,se1,mu2,se2,w1_quad,w1_closed,quad_error,w1_mc,mc_error\n";
    std::mt19937_64 rng(splitmix64(base_seed));
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) {
        const double mu1 = 0.3 * i;
        const double se1 = 0.1 + 0.2 * j;
        const double mu2 = 0.0, se2 = 1.0;
        std::vector<mev::GaussianBelief> b{{mu1, se1, 2}, {mu2, se2, 2}};
        const double w1 = mev::we_weights_gaussian(b)[0];
        const double closed = mev::normal_cdf(mu1 - mu2, 0.0, std::hypot(se1, se2));
        const double w1_mc = mev::mc_max_probabilities(b, cfg.mc_draws, rng)[0];
        out << fmt_double(mu1) << "," << fmt_double(se1) << "," << fmt_double(mu2) << ","
            << fmt_double(se2) << "," << fmt_double(w1) << "," << fmt_double(closed) << ","
            << fmt_double(std::abs(w1 - closed)) << "," << fmt_double(w1_mc) << ","
            << fmt_double(std::abs(w1_mc - closed)) << "\n";
      }
    }
    return;
  }

  // bias mode: M standard-normal variables (true MEV 0), per-trial ME/DE/WE
  std::mt19937_64 rng(splitmix64(base_seed ^ 0xE57ull));
  std::normal_distribution<double> gauss(0.0, 1.0);
  double sum_me = 0, sum_de = 0, sum_we = 0;
  double m2_me = 0, m2_de = 0, m2_we = 0;
  for (long trial = 0; trial < cfg.trials; ++trial) {
    mev::SampleSet set;
    set.samples.assign(cfg.n_variables, {});
    for (auto& s : set.samples) {
      s.reserve(cfg.n_samples);
      for (int k = 0; k < cfg.n_samples; ++k) s.push_back(gauss(rng));
    }
    const auto beliefs = mev::sample_mean_beliefs(set);
    const double me = mev::max_estimator(beliefs);
    const double de = mev::double_estimator(set, splitmix64(base_seed + 7919 * trial));
    const double we = mev::weighted_estimator(beliefs, mev::we_weights_gaussian(beliefs));
    const auto accum = [n = trial + 1](double& mean, double& m2, double x) {
      const double d = x - mean;
      mean += d / n;
      m2 += d * (x - mean);
    };
    accum(sum_me, m2_me, me);
    accum(sum_de, m2_de, de);
    accum(sum_we, m2_we, we);
  }
  const auto se_of = [&](double m2) {
    return cfg.trials > 1 ? std::sqrt(m2 / (cfg.trials - 1)) / std::sqrt(double(cfg.trials))
                          : 0.0;
  };
  std::ofstream out(fs::path(cfg.out_dir) / "estimators_bias.csv");
  out << "estimator,mean,std_error,trials\n";
  out << "ME," << fmt_double(sum_me) << "," << fmt_double(se_of(m2_me)) << "," << cfg.trials << "\n";
  out << "DE," << fmt_double(sum_de) << "," << fmt_double(se_of(m2_de)) << "," << cfg.trials << "\n";
  out << "WE," << fmt_double(sum_we) << "," << fmt_double(se_of(m2_we)) << "," << cfg.trials << "\n";
}

// ------------------------------------------------------------------- tabular

envs::GridSpec tabular_grid_spec(const ExperimentConfig& cfg) {
  if (cfg.map_file.empty()) return envs::diagnostic_grid();
  std::ifstream in(cfg.map_file);
  if (!in) throw std::runtime_error("cannot open map file: " + cfg.map_file);
  std::ostringstream ss;
  ss << in.rdbuf();
  envs::GridSpec spec = envs::diagnostic_grid();
  spec.map = ss.str();
  return spec;
}

std::vector<MetricsRow> run_tabular_cell(const ExperimentConfig& cfg, const std::string& algo,
                                         std::uint64_t seed) {
  const envs::GridSpec spec = tabular_grid_spec(cfg);
  const double gamma = 0.99;
  envs::GridWorld env(spec, splitmix64(seed));
  std::mt19937_64 act_rng(splitmix64(seed ^ 0xAC7ull));

  const int n_states = env.n_states();
  tabular::QTable q(n_states, env.n_actions());
  tabular::DoubleQTable dq(n_states, env.n_actions());
  tabular::WqlConfig wql_cfg;
  wql_cfg.quad.intervals = cfg.quad_intervals;

  enum class Kind { QL, DoubleQL, WQL } kind;
  if (algo == "QL") kind = Kind::QL;
  else if (algo == "DoubleQL") kind = Kind::DoubleQL;
  else if (algo == "WQL") kind = Kind::WQL;
  else throw std::invalid_argument("unknown tabular algorithm: " + algo + " (known: QL DoubleQL WQL)");

  const auto qrow = [&](int s) -> Eigen::VectorXd {
    if (kind == Kind::DoubleQL) return 0.5 * (dq.a.q.row(s) + dq.b.q.row(s)).transpose();
    return q.q.row(s).transpose();
  };

  std::vector<MetricsRow> rows;
  env.reset();
  int s = env.state();
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (long step = 0; step < cfg.steps_per_epoch; ++step) {
      const int a = tabular::epsilon_greedy(qrow(s), cfg.epsilon, act_rng);
      const auto sr = env.step(a);
      const int s_next = env.state();
      tabular::Transition t{s, a, sr.reward, s_next, env.is_goal(s_next)};
      switch (kind) {
        case Kind::QL: tabular::q_learning_step(q, t, gamma, cfg.alpha); break;
        case Kind::DoubleQL: tabular::double_q_step(dq, t, gamma, cfg.alpha, act_rng); break;
        case Kind::WQL: tabular::wql_step(q, t, gamma, cfg.alpha, wql_cfg); break;
      }
      if (sr.done) {
        env.reset();
        s = env.state();
      } else {
        s = s_next;
      }
    }

    // greedy evaluation from reset on an independent env instance
    envs::GridWorld eval_env(spec, splitmix64(seed * 1000003ull + epoch));
    double sum_undisc = 0.0, sum_disc = 0.0;
    for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
      eval_env.reset();
      double undisc = 0.0, disc = 0.0, g = 1.0;
      bool done = false;
      while (!done) {
        const int a = tabular::argmax_lowest(qrow(eval_env.state()));
        const auto sr = eval_env.step(a);
        undisc += sr.reward;
        disc += g * sr.reward;
        g *= gamma;
        done = sr.done;
      }
      sum_undisc += undisc;
      sum_disc += disc;
    }
    MetricsRow row;
    row.seed = seed;
    row.epoch = epoch;
    row.eval_return = sum_undisc / cfg.eval_episodes;
    row.predicted_value = qrow(env.start_state()).maxCoeff();
    row.realized_return = sum_disc / cfg.eval_episodes;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------- deep

struct DeepSetup {
  Profile profile;
  agent::AgentConfig agent;
  std::vector<int> widths;
  net::DropoutConfig dropout;
};

DeepSetup deep_setup(const ExperimentConfig& cfg, const std::string& algo_name, int obs_dim,
                     int n_actions) {
  DeepSetup s;
  s.profile = load_profile(cfg.profile);
  s.agent = s.profile.agent;
  s.agent.algo = parse_deep_algo(algo_name);

  std::vector<int> widths{obs_dim};
  for (int w : s.profile.hidden_widths) widths.push_back(w);
  widths.push_back(n_actions);
  s.widths = widths;

  net::MLPParams shape_probe;  // only widths matter for the config
  {
    std::mt19937_64 tmp(0);
    shape_probe = net::MLPParams::he_init(widths, tmp);
  }
  const bool uses_dropout = s.agent.algo == agent::Algo::DropDQN ||
                            s.agent.algo == agent::Algo::WDQN ||
                            s.agent.algo == agent::Algo::WDQN_TS;
  if (uses_dropout) {
    s.dropout = net::make_dropout_config(shape_probe, s.profile.dropout_mode,
                                         s.profile.dropout_p, s.profile.weight_decay,
                                         s.profile.dropout_reg, s.profile.temperature,
                                         s.profile.last_hidden_only);
  } else {
    s.dropout = net::make_dropout_config(shape_probe, net::DropoutMode::None, 0.0);
  }
  return s;
}

struct EvalResult {
  double undiscounted = 0.0;
  double discounted = 0.0;
};

EvalResult evaluate_policy(agent::TrainState& state, const agent::AgentConfig& cfg,
                           envs::Env& env, int episodes, std::mt19937_64& rng) {
  EvalResult out;
  for (int ep = 0; ep < episodes; ++ep) {
    Eigen::VectorXd obs = env.reset();
    double undisc = 0.0, disc = 0.0, g = 1.0;
    bool done = false;
    while (!done) {
      const int a = agent::act(state, cfg, obs, agent::ActMode::Eval, rng);
      const auto sr = env.step(a);
      undisc += sr.reward;
      disc += g * sr.reward;
      g *= cfg.gamma;
      obs = sr.obs;
      done = sr.done;
    }
    out.undiscounted += undisc;
    out.discounted += disc;
  }
  out.undiscounted /= episodes;
  out.discounted /= episodes;
  return out;
}

double predicted_initial_value(agent::TrainState& state, const agent::AgentConfig& cfg,
                               const Eigen::VectorXd& initial_obs, std::mt19937_64& rng) {
  if (cfg.weight_based() && state.config.any_dropout()) {
    const auto mc = net::mc_forward(state.online, state.config, initial_obs, cfg.mc_samples, rng);
    return agent::weights_from_samples(mc.samples).dot(mc.mean);
  }
  return net::forward_weight_avg(state.online, state.config, initial_obs).maxCoeff();
}

std::vector<MetricsRow> run_deep_cell(const ExperimentConfig& cfg, const std::string& algo,
                                      std::uint64_t seed) {
  if (cfg.env != "pointlander")
    throw std::invalid_argument("unknown deep env: " + cfg.env + " (known: pointlander)");

  envs::LanderSpec lspec;
  lspec.noise = cfg.lander_noise;
  envs::PointLander inner(lspec, splitmix64(seed ^ 0xE1ull));
  envs::StickyWrapper env(inner, cfg.sticky, splitmix64(seed ^ 0x57ull));

  DeepSetup setup = deep_setup(cfg, algo, env.obs_dim(), env.n_actions());
  agent::TrainState state =
      agent::TrainState::init(setup.widths, setup.dropout, splitmix64(seed ^ 0xA6ull));
  std::mt19937_64 act_rng(splitmix64(seed ^ 0xACull));
  agent::ReplayBuffer buffer(setup.agent.memory_max, setup.agent.memory_min);

  std::vector<MetricsRow> rows;
  Eigen::VectorXd obs = env.reset();
  long global_step = 0;
  std::vector<Eigen::VectorXd> batch_weights;
  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double entropy_sum = 0.0;
    long entropy_count = 0;
    for (long step = 0; step < cfg.steps_per_epoch; ++step, ++global_step) {
      const int a = agent::act(state, setup.agent, obs, agent::ActMode::Train, act_rng);
      const auto sr = env.step(a);
      buffer.add({obs, a, sr.reward, sr.obs, sr.done});
      obs = sr.done ? env.reset() : sr.obs;
      if (buffer.ready() && global_step % setup.agent.train_frequency == 0) {
        batch_weights.clear();
        agent::train_step(state, setup.agent, buffer,
                          setup.agent.weight_based() ? &batch_weights : nullptr);
        for (const auto& w : batch_weights) {
          entropy_sum += agent::weight_entropy(w);
          ++entropy_count;
        }
      }
    }

    envs::PointLander eval_inner(lspec, splitmix64(seed * 1000003ull + 2 * epoch));
    envs::StickyWrapper eval_env(eval_inner, cfg.sticky,
                                 splitmix64(seed * 1000003ull + 2 * epoch + 1));
    std::mt19937_64 eval_rng(splitmix64(seed * 999983ull + epoch));
    const EvalResult ev = evaluate_policy(state, setup.agent, eval_env, cfg.eval_episodes, eval_rng);

    MetricsRow row;
    row.seed = seed;
    row.epoch = epoch;
    row.eval_return = ev.undiscounted;
    row.predicted_value =
        predicted_initial_value(state, setup.agent, eval_env.reset(), eval_rng);
    row.realized_return = ev.discounted;
    if (setup.agent.weight_based() && entropy_count > 0)
      row.weight_entropy = entropy_sum / entropy_count;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

PredictedRealized predicted_vs_realized(agent::TrainState& state,
                                        const agent::AgentConfig& cfg, envs::Env& env,
                                        int episodes, std::mt19937_64& rng) {
  PredictedRealized out;
  const Eigen::VectorXd initial = env.reset();
  out.predicted = predicted_initial_value(state, cfg, initial, rng);
  out.realized = evaluate_policy(state, cfg, env, episodes, rng).discounted;
  return out;
}

int run_experiment(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw std::invalid_argument("config field 'seeds': none given");
  fs::create_directories(cfg.out_dir);
  write_resolved_config(cfg);

  if (cfg.kind == ExperimentKind::Estimators) {
    const auto t0 = std::chrono::steady_clock::now();
    run_estimators(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(fs::path(cfg.out_dir) / "estimators.json", cfg, "estimators",
                   cfg.seeds.front(), secs);
    return 0;
  }

  if (cfg.algorithms.empty())
    throw std::invalid_argument("config field 'algorithms': at least one required");
  for (const auto& algo : cfg.algorithms) {
    for (const auto seed : cfg.seeds) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<MetricsRow> rows;
      if (cfg.kind == ExperimentKind::Tabular)
        rows = run_tabular_cell(cfg, algo, seed);
      else
        rows = run_deep_cell(cfg, algo, seed);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const std::string stem = algo + "_seed" + std::to_string(seed);
      write_metrics_file(fs::path(cfg.out_dir) / (stem + ".csv"), rows);
      write_manifest(fs::path(cfg.out_dir) / (stem + ".json"), cfg, algo, seed, secs);
    }
  }
  return 0;
}

std::vector<SummaryRow> summarize(const std::string& dir, int window) {
  if (window < 1) throw std::invalid_argument("summarize: window must be >= 1");
  struct Cell {
    std::vector<double> eval, pred, real;
  };
  std::map<std::string, std::map<long, Cell>> data;  // algo -> epoch -> values

  bool any = false;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv" &&
        entry.path().filename().string().find("_seed") != std::string::npos)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  for (const auto& path : files) {
    const std::string fname = path.filename().string();
    const std::string algo = fname.substr(0, fname.find("_seed"));
    std::ifstream in(path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line_no == 1) {
        if (line != kMetricsHeader)
          throw std::runtime_error(path.string() + ":1: unexpected metrics header");
        continue;
      }
      if (trim(line).empty()) continue;
      const auto cols = split(line, ',');
      if (cols.size() != 6)
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": expected 6 columns");
      try {
        const long epoch = std::stol(cols[1]);
        Cell& c = data[algo][epoch];
        c.eval.push_back(std::stod(cols[2]));
        c.pred.push_back(std::stod(cols[3]));
        c.real.push_back(std::stod(cols[4]));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": malformed numeric field");
      }
      any = true;
    }
  }
  if (!any) throw std::runtime_error("summarize: no metrics rows found under " + dir);

  const auto mean_ci = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    if (v.size() < 2) return std::pair<double, double>{mean, 0.0};
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    return std::pair<double, double>{mean, 1.96 * std::sqrt(var / n)};
  };

  std::vector<SummaryRow> rows;
  for (auto& [algo, epochs] : data) {
    std::vector<SummaryRow> algo_rows;
    for (auto& [epoch, cell] : epochs) {
      SummaryRow r;
      r.algorithm = algo;
      r.epoch = epoch;
      r.n_seeds = static_cast<int>(cell.eval.size());
      r.single_seed = cell.eval.size() < 2;
      std::tie(r.eval_mean, r.eval_ci) = mean_ci(cell.eval);
      std::tie(r.predicted_mean, r.predicted_ci) = mean_ci(cell.pred);
      std::tie(r.realized_mean, r.realized_ci) = mean_ci(cell.real);
      algo_rows.push_back(r);
    }
    if (window > 1) {
      // trailing moving average over epochs (means only)
      const auto smooth = [&](auto field) {
        std::vector<double> src;
        for (const auto& r : algo_rows) src.push_back(r.*field);
        for (std::size_t i = 0; i < algo_rows.size(); ++i) {
          const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
          double s = 0.0;
          for (std::size_t k = lo; k <= i; ++k) s += src[k];
          algo_rows[i].*field = s / static_cast<double>(i - lo + 1);
        }
      };
      smooth(&SummaryRow::eval_mean);
      smooth(&SummaryRow::predicted_mean);
      smooth(&SummaryRow::realized_mean);
    }
    rows.insert(rows.end(), algo_rows.begin(), algo_rows.end());
  }
  return rows;
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open summary file for writing: " + path);
  out << "algorithm,epoch,n_seeds,single_seed,eval_mean,eval_ci,predicted_mean,predicted_ci,"
         "realized_mean,realized_ci\n";
  for (const auto& r : rows)
    out << r.algorithm << "," << r.epoch << "," << r.n_seeds << "," << (r.single_seed ? 1 : 0)
        << "," << fmt_double(r.eval_mean) << "," << fmt_double(r.eval_ci) << ","
        << fmt_double(r.predicted_mean) << "," << fmt_double(r.predicted_ci) << ","
        << fmt_double(r.realized_mean) << "," << fmt_double(r.realized_ci) << "\n";
}

int selftest() {
  int failures = 0;
  const auto check = [&](bool ok, const std::string& what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what.c_str());
    if (!ok) ++failures;
  };

  // WE weights against the two-variable closed form
  {
    std::vector<mev::GaussianBelief> b{{1.0, 1.0, 2}, {0.0, 1.0, 2}};
    const double w1 = mev::we_weights_gaussian(b)[0];
    const double closed = mev::normal_cdf(1.0, 0.0, std::sqrt(2.0));
    check(std::abs(w1 - closed) < 1e-6, "WE weights match the M=2 closed form");
  }

  // analytic gradients against central finite differences
  {
    std::mt19937_64 rng(7);
    auto params = net::MLPParams::he_init({3, 5, 2}, rng);
    // keep relu pre-activations off the kink for the finite-difference probe
    for (auto& b : params.biases) b.array() += 0.25;
    auto cfg = net::make_dropout_config(params, net::DropoutMode::Concrete, 0.3, 1e-4, 1e-3);
    std::vector<Eigen::VectorXd> xs{Eigen::VectorXd::Random(3)};
    std::vector<int> actions{1};
    Eigen::VectorXd targets(1);
    targets << 0.7;
    std::vector<net::DropoutMask> masks{net::sample_masks(params, cfg, rng)};
    net::Gradients g = net::Gradients::zeros_like(params);
    net::loss_and_gradients(params, cfg, xs, actions, targets, masks, net::LossKind::Mse, &g);
    const double h = 1e-6;
    double worst = 0.0;
    auto probe = [&](double* p, double analytic) {
      const double orig = *p;
      *p = orig + h;
      const double up =
          net::loss_and_gradients(params, cfg, xs, actions, targets, masks, net::LossKind::Mse, nullptr);
      *p = orig - h;
      const double dn =
          net::loss_and_gradients(params, cfg, xs, actions, targets, masks, net::LossKind::Mse, nullptr);
      *p = orig;
      const double fd = (up - dn) / (2 * h);
      worst = std::max(worst, std::abs(fd - analytic) / std::max(1.0, std::abs(fd)));
    };
    probe(&params.weights[0](1, 1), g.d_weights[0](1, 1));
    probe(&params.biases[0][2], g.d_biases[0][2]);
    probe(&cfg.layers[0].logit, g.d_logits[0]);
    check(worst < 1e-4, "analytic gradients match finite differences");
  }

  // environment determinism
  {
    const auto run = [] {
      envs::PointLander env(envs::LanderSpec{}, 42);
      Eigen::VectorXd obs = env.reset();
      double acc = 0.0;
      for (int i = 0; i < 200; ++i) {
        const auto sr = env.step(i % 5);
        acc += sr.reward + sr.obs.sum();
        if (sr.done) env.reset();
      }
      return acc;
    };
    check(run() == run(), "pointlander trajectories are seed-deterministic");
  }

  return failures == 0 ? 0 : 1;
}

}  // namespace wq::harness
