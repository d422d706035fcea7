#include "wq/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace wq::envs {

namespace {

[[noreturn]] void map_error(const std::string& what, int line, int col) {
  throw std::invalid_argument("grid map: " + what + " at line " + std::to_string(line) +
                              ", column " + std::to_string(col));
}

}  // namespace

GridWorld::GridWorld(const GridSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : spec.map) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) map_error("empty map", 1, 1);

  rows_ = static_cast<int>(lines.size());
  cols_ = static_cast<int>(lines[0].size());
  wall_.assign(rows_ * cols_, 0);
  goal_.assign(rows_ * cols_, 0);
  int starts = 0, goals = 0;
  for (int r = 0; r < rows_; ++r) {
    if (static_cast<int>(lines[r].size()) != cols_)
      map_error("ragged row (expected width " + std::to_string(cols_) + ")", r + 1,
                static_cast<int>(lines[r].size()) + 1);
    for (int c = 0; c < cols_; ++c) {
      const int s = r * cols_ + c;
      switch (lines[r][c]) {
        case '.': break;
        case '#': wall_[s] = 1; break;
        case 'S':
          start_ = s;
          ++starts;
          break;
        case 'G':
          goal_[s] = 1;
          ++goals;
          break;
        default: map_error(std::string("unknown character '") + lines[r][c] + "'", r + 1, c + 1);
      }
    }
  }
  if (starts != 1) map_error("map must contain exactly one S", 1, 1);
  if (goals < 1) map_error("map must contain at least one G", 1, 1);
}

VectorXd GridWorld::reset() {
  state_ = start_;
  steps_ = 0;
  done_ = false;
  return VectorXd::Constant(1, static_cast<double>(state_));
}

int GridWorld::next_state(int s, int action) const {
  const int r = s / cols_, c = s % cols_;
  int nr = r, nc = c;
  switch (action) {
    case 0: --nr; break;
    case 1: ++nr; break;
    case 2: --nc; break;
    case 3: ++nc; break;
    default: throw std::invalid_argument("gridworld: action out of range");
  }
  if (nr < 0 || nr >= rows_ || nc < 0 || nc >= cols_) return s;
  const int ns = nr * cols_ + nc;
  return wall_[ns] ? s : ns;
}

StepResult GridWorld::step(int action) {
  if (done_) throw std::logic_error("gridworld: step after done without reset");
  const int ns = next_state(state_, action);
  double reward = spec_.step_reward.sample(rng_);
  bool done = false;
  if (goal_[ns]) {
    reward += spec_.goal_reward;
    done = true;
  }
  state_ = ns;
  if (++steps_ >= spec_.episode_cap) done = true;
  done_ = done;
  return {VectorXd::Constant(1, static_cast<double>(state_)), reward, done};
}

tabular::TabularMDP GridWorld::to_mdp(double gamma) const {
  tabular::TabularMDP mdp;
  mdp.n_states = n_states();
  mdp.n_actions = n_actions();
  mdp.gamma = gamma;
  mdp.initial_state = start_;
  mdp.terminal.assign(mdp.n_states, 0);
  for (int s = 0; s < mdp.n_states; ++s) mdp.terminal[s] = goal_[s];
  mdp.transition.assign(mdp.n_states,
                        Eigen::MatrixXd::Zero(mdp.n_actions, mdp.n_states));
  mdp.reward.assign(mdp.n_states, std::vector<tabular::RewardDist>(mdp.n_actions));
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int ns = wall_[s] ? s : next_state(s, a);
      mdp.transition[s](a, ns) = 1.0;
      tabular::RewardDist r = spec_.step_reward;
      if (goal_[ns]) {
        // fold the terminal bonus into the step distribution's location
        if (r.kind == tabular::RewardDist::Kind::Bernoulli)
          throw std::invalid_argument("to_mdp: bernoulli step reward + goal bonus not representable");
        r.a += spec_.goal_reward;
      }
      mdp.reward[s][a] = r;
    }
  }
  return mdp;
}

GridSpec diagnostic_grid() {
  GridSpec spec;
  spec.map =
      "S....\n"
      ".....\n"
      ".....\n"
      ".....\n"
      "....G\n";
  spec.step_reward = {tabular::RewardDist::Kind::Gaussian, -0.1, 1.0};
  spec.goal_reward = 1.0;
  spec.episode_cap = 200;
  return spec;
}

PointLander::PointLander(const LanderSpec& spec, std::uint64_t seed)
    : spec_(spec), rng_(seed) {
  if (spec.max_steps < 1) throw std::invalid_argument("pointlander: max_steps must be >= 1");
}

VectorXd PointLander::obs() const {
  VectorXd o(4);
  o << x_, y_, vx_, vy_;
  return o;
}

VectorXd PointLander::reset() {
  x_ = 0.0;
  y_ = spec_.start_y;
  vx_ = vy_ = 0.0;
  steps_ = 0;
  done_ = false;
  return obs();
}

StepResult PointLander::step(int action) {
  if (done_) throw std::logic_error("pointlander: step after done without reset");
  if (action < 0 || action >= 5) throw std::invalid_argument("pointlander: bad action");

  const double prev_dist = std::hypot(x_, y_);
  double ax = 0.0, ay = -spec_.gravity;
  switch (action) {
    case 0: break;
    case 1: ax -= spec_.thrust; break;
    case 2: ax += spec_.thrust; break;
    case 3: ay -= spec_.thrust; break;
    case 4: ay += spec_.thrust; break;
  }
  vx_ += ax * spec_.dt;
  vy_ += ay * spec_.dt;
  if (spec_.noise > 0.0) {
    std::normal_distribution<double> n(0.0, spec_.noise);
    vx_ += n(rng_);
    vy_ += n(rng_);
  }
  x_ += vx_ * spec_.dt;
  y_ += vy_ * spec_.dt;
  ++steps_;

  double reward = prev_dist - std::hypot(x_, y_);
  bool done = false;
  if (y_ <= 0.0) {
    const double speed = std::hypot(vx_, vy_);
    done = true;
    if (std::abs(x_) <= spec_.pad_halfwidth && speed <= spec_.land_speed)
      reward += spec_.terminal_bonus;
    else
      reward -= spec_.terminal_bonus;
  } else if (std::abs(x_) > spec_.x_bound || y_ > spec_.y_bound) {
    done = true;
    reward -= spec_.terminal_bonus;
  } else if (steps_ >= spec_.max_steps) {
    done = true;
  }
  done_ = done;
  return {obs(), reward, done};
}

StickyWrapper::StickyWrapper(Env& inner, double p_repeat, std::uint64_t seed)
    : inner_(inner), p_repeat_(p_repeat), rng_(seed) {
  if (p_repeat < 0.0 || p_repeat > 1.0)
    throw std::invalid_argument("sticky wrapper: p_repeat must lie in [0,1]");
}

VectorXd StickyWrapper::reset() {
  last_action_.reset();
  return inner_.reset();
}

StepResult StickyWrapper::step_with(int action, std::mt19937_64& rng, int* executed) {
  int exec = action;
  if (last_action_ && p_repeat_ > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < p_repeat_) exec = *last_action_;
  }
  StepResult r = inner_.step(exec);
  last_action_ = exec;
  if (r.done) last_action_.reset();
  if (executed) *executed = exec;
  return r;
}

}  // namespace wq::envs
