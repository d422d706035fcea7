#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <random>
#include <string>

#include "wq/tabular.hpp"

// Desk-scale environments replicating the experimental stressors: reward
// noise, sticky actions and continuous observations.
namespace wq::envs {

using Eigen::VectorXd;

struct StepResult {
  VectorXd obs;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual int obs_dim() const = 0;
  virtual int n_actions() const = 0;
  // Discrete state count, or -1 for continuous observations.
  virtual int n_states() const { return -1; }
  virtual void seed(std::uint64_t s) = 0;
  virtual VectorXd reset() = 0;
  // Throws std::logic_error when called after done without reset.
  virtual StepResult step(int action) = 0;
};

struct GridSpec {
  std::string map;  // rows of S G # . characters
  tabular::RewardDist step_reward{tabular::RewardDist::Kind::Constant, 0.0, 0.0};
  double goal_reward = 1.0;
  long episode_cap = 200;
};

// Discrete gridworld; actions 0..3 = up, down, left, right; wall-blocked and
// off-grid moves keep the position. The observation is the flat state index.
class GridWorld : public Env {
 public:
  explicit GridWorld(const GridSpec& spec, std::uint64_t seed = 0);

  int obs_dim() const override { return 1; }
  int n_actions() const override { return 4; }
  int n_states() const override { return rows_ * cols_; }
  void seed(std::uint64_t s) override { rng_.seed(s); }
  VectorXd reset() override;
  StepResult step(int action) override;

  int state() const { return state_; }
  int start_state() const { return start_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool is_goal(int s) const { return goal_[s]; }
  bool is_wall(int s) const { return wall_[s]; }
  const GridSpec& spec() const { return spec_; }

  // Exact MDP of this gridworld (deterministic transitions, the reward
  // model folding the goal bonus into the step distribution).
  tabular::TabularMDP to_mdp(double gamma) const;

 private:
  int next_state(int s, int action) const;

  GridSpec spec_;
  int rows_ = 0, cols_ = 0;
  int start_ = 0;
  std::vector<char> wall_, goal_;
  int state_ = 0;
  long steps_ = 0;
  bool done_ = true;
  std::mt19937_64 rng_;
};

// The 5x5 diagnostic gridworld: open grid, start top-left, goal bottom-right,
// step reward ~ N(-0.1, 1.0), terminal goal reward 1.
GridSpec diagnostic_grid();

struct LanderSpec {
  double noise = 0.05;    // per-step velocity noise sd
  long max_steps = 1000;  // episode cap
  double dt = 0.1;
  double gravity = 0.5;
  double thrust = 1.0;
  double pad_halfwidth = 0.2;
  double land_speed = 0.5;  // soft-landing speed threshold
  double x_bound = 1.5;
  double y_bound = 2.0;
  double start_y = 1.0;
  double terminal_bonus = 100.0;
};

// 4-dim observation (x, y, vx, vy); 5 actions (no-op, thrust -x, +x, -y, +y).
// Shaped reward is the decrement of the distance to the pad center, with
// +bonus on a soft landing inside the pad and -bonus on crash/out-of-bounds.
class PointLander : public Env {
 public:
  explicit PointLander(const LanderSpec& spec, std::uint64_t seed = 0);

  int obs_dim() const override { return 4; }
  int n_actions() const override { return 5; }
  void seed(std::uint64_t s) override { rng_.seed(s); }
  VectorXd reset() override;
  StepResult step(int action) override;

  const LanderSpec& spec() const { return spec_; }

 private:
  VectorXd obs() const;

  LanderSpec spec_;
  double x_ = 0, y_ = 0, vx_ = 0, vy_ = 0;
  long steps_ = 0;
  bool done_ = true;
  std::mt19937_64 rng_;
};

// Repeats the previously executed action with probability p_repeat; the
// first step of an episode always uses the agent's action. Observations and
// rewards pass through untouched.
class StickyWrapper : public Env {
 public:
  StickyWrapper(Env& inner, double p_repeat, std::uint64_t seed = 0);

  int obs_dim() const override { return inner_.obs_dim(); }
  int n_actions() const override { return inner_.n_actions(); }
  int n_states() const override { return inner_.n_states(); }
  void seed(std::uint64_t s) override { rng_.seed(s); }
  VectorXd reset() override;
  StepResult step(int action) override { return step_with(action, rng_); }

  // Sticky step against an explicit rng; also reports the executed action.
  StepResult step_with(int action, std::mt19937_64& rng, int* executed = nullptr);

 private:
  Env& inner_;
  double p_repeat_;
  std::optional<int> last_action_;
  std::mt19937_64 rng_;
};

}  // namespace wq::envs
