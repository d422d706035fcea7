#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "wq/mev.hpp"

// Finite-MDP agents: Q-Learning, Double Q-Learning and Weighted Q-Learning,
// plus a value-iteration oracle for ground-truth Q*.
namespace wq::tabular {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Reward distribution attached to a (state, action) pair.
struct RewardDist {
  enum class Kind { Constant, Gaussian, Bernoulli };
  Kind kind = Kind::Constant;
  double a = 0.0;  // value | mean | success probability
  double b = 0.0;  // unused | standard deviation | payout

  double mean() const;
  double sample(std::mt19937_64& rng) const;
};

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  // transition[s] is an n_actions x n_states matrix of P(s' | s, a).
  std::vector<MatrixXd> transition;
  std::vector<std::vector<RewardDist>> reward;  // [s][a]
  double gamma = 0.99;
  int initial_state = 0;
  std::vector<char> terminal;

  // Throws if any transition row fails to sum to 1 within 1e-12 or gamma
  // leaves [0,1].
  void validate() const;
};

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
  bool done = false;
};

// Action-values plus per-entry visit counts and Welford accumulators over
// the observed TD targets (mean / m2), which back the WQL uncertainty model.
struct QTable {
  MatrixXd q;
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> visits;
  MatrixXd target_mean;
  MatrixXd target_m2;

  QTable(int n_states, int n_actions);

  int n_states() const { return static_cast<int>(q.rows()); }
  int n_actions() const { return static_cast<int>(q.cols()); }

  // Sample variance of recorded targets (0 when fewer than 2 visits).
  double target_variance(int s, int a) const;
  void record_target(int s, int a, double y);
};

struct DoubleQTable {
  QTable a;
  QTable b;

  DoubleQTable(int n_states, int n_actions) : a(n_states, n_actions), b(n_states, n_actions) {}
};

struct WqlConfig {
  mev::QuadratureConfig quad{128, 8.0};
  double prior_scale = mev::kDefaultPriorScale;
};

int argmax_lowest(const VectorXd& row);

// Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)); target is r at
// terminal transitions.
void q_learning_step(QTable& table, const Transition& t, double gamma, double alpha);

// Coin-flip update of one table using the other for evaluation.
void double_q_step(DoubleQTable& tables, const Transition& t, double gamma, double alpha,
                   std::mt19937_64& coin);

// Weighted target: r + gamma * sum_a' w_a' Q(s',a') with weights from the
// Gaussian belief per action at s'.
void wql_step(QTable& table, const Transition& t, double gamma, double alpha,
              const WqlConfig& cfg = {});

// Per-action Gaussian beliefs at state s, as used by wql_step.
std::vector<mev::GaussianBelief> state_beliefs(const QTable& table, int s,
                                               double prior_scale = mev::kDefaultPriorScale);

// Q* with sup-norm Bellman residual < tol; throws after max_iters sweeps.
MatrixXd value_iteration(const TabularMDP& mdp, double tol, long max_iters = 1000000);

// Uniform action with probability epsilon, else lowest-index argmax.
int epsilon_greedy(const VectorXd& qrow, double epsilon, std::mt19937_64& rng);

}  // namespace wq::tabular
