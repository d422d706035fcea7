#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "wq/net.hpp"

// Replay-based deep agents: DQN, Double DQN, dropout-DQN and Weighted DQN
// with MC-dropout weights.
namespace wq::agent {

using Eigen::VectorXd;

enum class Algo { DQN, DDQN, DropDQN, WDQN, WDQN_TS };

struct Transition {
  VectorXd s;
  int a = 0;
  double r = 0.0;
  VectorXd s_next;
  bool done = false;
};

// Ring buffer with uniform sampling over the stored items.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, std::size_t min_size = 1);

  void add(Transition t);
  std::size_t size() const { return store_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t min_size() const { return min_size_; }
  bool ready() const { return store_.size() >= min_size_; }
  const Transition& operator[](std::size_t i) const { return store_[i]; }

  std::vector<const Transition*> sample(int batch, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t min_size_;
  std::size_t next_ = 0;
  std::vector<Transition> store_;
};

struct EpsSchedule {
  double start = 1.0;
  double end = 0.01;
  long decay_steps = 1000;
  double eval_eps = 0.0;

  double at(long step) const;
};

struct AgentConfig {
  Algo algo = Algo::DQN;
  double gamma = 0.99;
  EpsSchedule eps;
  long target_period = 300;  // C
  int batch_size = 32;       // M
  int mc_samples = 50;       // T
  long train_frequency = 1;
  net::LossKind loss = net::LossKind::Mse;
  net::AdamConfig adam;
  std::size_t memory_min = 250;
  std::size_t memory_max = 10000;

  bool weight_based() const { return algo == Algo::WDQN || algo == Algo::WDQN_TS; }
};

struct TrainState {
  net::MLPParams online;
  net::DropoutConfig config;
  net::MLPParams target;
  net::DropoutConfig target_config;
  net::AdamState opt;
  long step = 0;
  std::mt19937_64 rng;

  static TrainState init(const std::vector<int>& widths, const net::DropoutConfig& dropout,
                         std::uint64_t seed);
};

// y_i = r_i + gamma * max_a Q(s'_i, a; theta-) via the weight-averaged pass;
// the bootstrap term is zeroed at terminal transitions.
VectorXd dqn_target(const std::vector<const Transition*>& batch,
                    const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                    double gamma);

// y_i = r_i + gamma * Q(s'_i, argmax_a Q(s'_i, a; theta); theta-).
VectorXd ddqn_target(const std::vector<const Transition*>& batch,
                     const net::MLPParams& online_params, const net::DropoutConfig& online_cfg,
                     const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                     double gamma);

// Argmax win frequencies over T stochastic passes, lowest index on ties.
VectorXd wdqn_weights(const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                      const VectorXd& s_next, int t_samples, std::mt19937_64& rng);

// Weights from a precomputed T x A sample matrix.
VectorXd weights_from_samples(const Eigen::MatrixXd& samples);

// y_i = r_i + gamma * sum_a w_a * mean_a, weights and predictive means taken
// from the SAME T samples per transition. Per-transition weight vectors are
// appended to *weights_out when non-null.
VectorXd wdqn_target(const std::vector<const Transition*>& batch,
                     const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                     double gamma, int t_samples, std::mt19937_64& rng,
                     std::vector<VectorXd>* weights_out = nullptr);

// One replay update: uniform batch, per-algorithm targets, a fresh online
// mask per transition, one Adam step, theta- refresh every C steps.
// Throws std::runtime_error("replay buffer not ready") below the threshold.
double train_step(TrainState& state, const AgentConfig& cfg, const ReplayBuffer& buffer,
                  std::vector<VectorXd>* weights_out = nullptr);

enum class ActMode { Train, Eval };

int act(TrainState& state, const AgentConfig& cfg, const VectorXd& obs, ActMode mode,
        std::mt19937_64& rng);

// -sum w log w, natural log, 0 log 0 = 0.
double weight_entropy(const VectorXd& weights);

}  // namespace wq::agent
