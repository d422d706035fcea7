#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wq/agent.hpp"
#include "wq/envs.hpp"
#include "wq/tabular.hpp"

// Experiment runner: estimator benchmarks, tabular comparisons, deep-agent
// training, CSV metric logging and the default hyperparameter profiles.
namespace wq::harness {

// Full agent setup resolved from a named profile.
struct Profile {
  std::string name;
  agent::AgentConfig agent;
  std::vector<int> hidden_widths;
  net::DropoutMode dropout_mode = net::DropoutMode::Concrete;
  double dropout_p = 0.2;
  double weight_decay = 1e-6;
  double dropout_reg = 2.5e-3;
  double temperature = 10.0;
  bool last_hidden_only = false;
};

// Known names: asterix-like, lunar-like, minatar-like. Throws on anything
// else, listing the known profiles.
Profile load_profile(const std::string& name);
std::vector<std::string> profile_names();

enum class ExperimentKind { Estimators, Tabular, Deep };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Deep;
  std::vector<std::string> algorithms;
  std::vector<std::uint64_t> seeds;
  long epochs = 10;
  long steps_per_epoch = 5000;
  int eval_episodes = 10;
  std::string out_dir = "out";
  std::string profile = "lunar-like";

  // deep
  std::string env = "pointlander";
  double sticky = 0.1;
  double lander_noise = 0.05;

  // tabular
  double alpha = 0.1;
  double epsilon = 0.1;
  int quad_intervals = 128;
  std::string map_file;  // empty -> built-in diagnostic grid

  // estimators
  std::string estimators_mode = "bias";  // bias | closedform
  int n_variables = 5;
  int n_samples = 20;
  long trials = 10000;
  long mc_draws = 1000000;

  std::map<std::string, std::string> raw;  // resolved key/value echo
};

// Flat key = value text config; '#' starts a comment. Unknown keys are an
// error naming the key.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct MetricsRow {
  std::uint64_t seed = 0;
  long epoch = 0;
  double eval_return = 0.0;
  double predicted_value = 0.0;
  double realized_return = 0.0;
  std::optional<double> weight_entropy;
};

extern const char* kMetricsHeader;

std::string format_metrics_row(const MetricsRow& row);

// Runs every (algorithm, seed) cell; writes one metrics CSV and one JSON
// manifest per cell plus the resolved config echo. Returns 0 on success.
int run_experiment(const ExperimentConfig& cfg);

// Value estimate at the initial observation vs empirical mean discounted
// return of `episodes` evaluation episodes.
struct PredictedRealized {
  double predicted = 0.0;
  double realized = 0.0;
};
PredictedRealized predicted_vs_realized(agent::TrainState& state,
                                        const agent::AgentConfig& cfg, envs::Env& env,
                                        int episodes, std::mt19937_64& rng);

struct SummaryRow {
  std::string algorithm;
  long epoch = 0;
  int n_seeds = 0;
  bool single_seed = false;
  double eval_mean = 0.0, eval_ci = 0.0;
  double predicted_mean = 0.0, predicted_ci = 0.0;
  double realized_mean = 0.0, realized_ci = 0.0;
};

// Aggregates every metrics CSV under `dir`: per-algorithm seed mean and 95%
// normal-approximation confidence interval per epoch, with an optional
// moving-average window over epochs.
std::vector<SummaryRow> summarize(const std::string& dir, int window = 1);
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path);

// Quick internal consistency checks; returns 0 when all pass.
int selftest();

// Stable shorthand for "%.17g" float formatting used by every CSV writer.
std::string fmt_double(double v);

}  // namespace wq::harness
