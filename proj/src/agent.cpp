#include "wq/agent.hpp"

#include <cmath>
#include <stdexcept>

namespace wq::agent {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t min_size)
    : capacity_(capacity), min_size_(min_size) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  store_.reserve(std::min<std::size_t>(capacity, 1 << 20));
}

void ReplayBuffer::add(Transition t) {
  if (store_.size() < capacity_) {
    store_.push_back(std::move(t));
  } else {
    store_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(int batch, std::mt19937_64& rng) const {
  if (store_.empty()) throw std::runtime_error("replay buffer not ready");
  std::uniform_int_distribution<std::size_t> pick(0, store_.size() - 1);
  std::vector<const Transition*> out;
  out.reserve(batch);
  for (int i = 0; i < batch; ++i) out.push_back(&store_[pick(rng)]);
  return out;
}

double EpsSchedule::at(long step) const {
  if (decay_steps <= 0 || step >= decay_steps) return end;
  const double f = static_cast<double>(step) / static_cast<double>(decay_steps);
  return start + f * (end - start);
}

TrainState TrainState::init(const std::vector<int>& widths, const net::DropoutConfig& dropout,
                            std::uint64_t seed) {
  TrainState s;
  s.rng.seed(seed);
  s.online = net::MLPParams::he_init(widths, s.rng);
  s.config = dropout;
  s.target = s.online;
  s.target_config = dropout;
  s.opt = net::AdamState::zeros_like(s.online);
  return s;
}

VectorXd dqn_target(const std::vector<const Transition*>& batch,
                    const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                    double gamma) {
  if (batch.empty()) throw std::invalid_argument("dqn_target: empty batch");
  VectorXd y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    double boot = 0.0;
    if (!t.done)
      boot = net::forward_weight_avg(target_params, target_cfg, t.s_next).maxCoeff();
    y[i] = t.r + gamma * boot;
  }
  return y;
}

VectorXd ddqn_target(const std::vector<const Transition*>& batch,
                     const net::MLPParams& online_params, const net::DropoutConfig& online_cfg,
                     const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                     double gamma) {
  if (batch.empty()) throw std::invalid_argument("ddqn_target: empty batch");
  VectorXd y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    double boot = 0.0;
    if (!t.done) {
      const VectorXd online_q = net::forward_weight_avg(online_params, online_cfg, t.s_next);
      int sel = 0;
      for (int a = 1; a < online_q.size(); ++a)
        if (online_q[a] > online_q[sel]) sel = a;
      boot = net::forward_weight_avg(target_params, target_cfg, t.s_next)[sel];
    }
    y[i] = t.r + gamma * boot;
  }
  return y;
}

VectorXd weights_from_samples(const Eigen::MatrixXd& samples) {
  const long t_samples = samples.rows();
  const long n_actions = samples.cols();
  VectorXd w = VectorXd::Zero(n_actions);
  for (long t = 0; t < t_samples; ++t) {
    int best = 0;
    for (int a = 1; a < n_actions; ++a)
      if (samples(t, a) > samples(t, best)) best = a;
    w[best] += 1.0;
  }
  return w / static_cast<double>(t_samples);
}

VectorXd wdqn_weights(const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                      const VectorXd& s_next, int t_samples, std::mt19937_64& rng) {
  return weights_from_samples(
      net::mc_forward(target_params, target_cfg, s_next, t_samples, rng).samples);
}

VectorXd wdqn_target(const std::vector<const Transition*>& batch,
                     const net::MLPParams& target_params, const net::DropoutConfig& target_cfg,
                     double gamma, int t_samples, std::mt19937_64& rng,
                     std::vector<VectorXd>* weights_out) {
  if (batch.empty()) throw std::invalid_argument("wdqn_target: empty batch");
  if (!target_cfg.any_dropout()) {
    // Degenerate reduction: every pass is the deterministic forward, so the
    // weights are the indicator of its argmax and the target equals DQN's.
    VectorXd y(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Transition& t = *batch[i];
      double boot = 0.0;
      if (!t.done) {
        const VectorXd q = net::forward_weight_avg(target_params, target_cfg, t.s_next);
        int best = 0;
        for (int a = 1; a < q.size(); ++a)
          if (q[a] > q[best]) best = a;
        boot = q[best];
        if (weights_out) {
          VectorXd w = VectorXd::Zero(q.size());
          w[best] = 1.0;
          weights_out->push_back(w);
        }
      }
      y[i] = t.r + gamma * boot;
    }
    return y;
  }
  VectorXd y(batch.size());
  std::vector<VectorXd> next_states;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!batch[i]->done) {
      next_states.push_back(batch[i]->s_next);
      idx.push_back(i);
    }
    y[i] = batch[i]->r;
  }
  if (!next_states.empty()) {
    const auto mc = net::mc_forward_batch(target_params, target_cfg, next_states, t_samples, rng);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const VectorXd w = weights_from_samples(mc[k].samples);
      y[idx[k]] += gamma * w.dot(mc[k].mean);
      if (weights_out) weights_out->push_back(w);
    }
  }
  return y;
}

double train_step(TrainState& state, const AgentConfig& cfg, const ReplayBuffer& buffer,
                  std::vector<VectorXd>* weights_out) {
  if (!buffer.ready()) throw std::runtime_error("replay buffer not ready");

  const auto batch = buffer.sample(cfg.batch_size, state.rng);
  VectorXd targets;
  switch (cfg.algo) {
    case Algo::DQN:
    case Algo::DropDQN:
      targets = dqn_target(batch, state.target, state.target_config, cfg.gamma);
      break;
    case Algo::DDQN:
      targets = ddqn_target(batch, state.online, state.config, state.target,
                            state.target_config, cfg.gamma);
      break;
    case Algo::WDQN:
    case Algo::WDQN_TS:
      targets = wdqn_target(batch, state.target, state.target_config, cfg.gamma,
                            cfg.mc_samples, state.rng, weights_out);
      break;
  }

  std::vector<VectorXd> xs;
  std::vector<int> actions;
  std::vector<net::DropoutMask> masks;
  xs.reserve(batch.size());
  for (const Transition* t : batch) {
    xs.push_back(t->s);
    actions.push_back(t->a);
    masks.push_back(net::sample_masks(state.online, state.config, state.rng));
  }

  net::Gradients grads = net::Gradients::zeros_like(state.online);
  const double loss = net::loss_and_gradients(state.online, state.config, xs, actions,
                                              targets, masks, cfg.loss, &grads);
  net::optimizer_step(state.online, state.config, grads, state.opt, cfg.adam);

  ++state.step;
  if (state.step % cfg.target_period == 0) {
    state.target = state.online;
    state.target_config = state.config;
  }
  return loss;
}

int act(TrainState& state, const AgentConfig& cfg, const VectorXd& obs, ActMode mode,
        std::mt19937_64& rng) {
  const int n_actions = state.online.output_dim();
  const auto greedy = [](const VectorXd& q) {
    int best = 0;
    for (int a = 1; a < q.size(); ++a)
      if (q[a] > q[best]) best = a;
    return best;
  };
  const auto eps_pick = [&](double eps, const VectorXd& q) {
    if (eps > 0.0) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(rng) < eps) {
        std::uniform_int_distribution<int> pick(0, n_actions - 1);
        return pick(rng);
      }
    }
    return greedy(q);
  };

  if (mode == ActMode::Train) {
    if (cfg.algo == Algo::WDQN_TS) {
      // Thompson sampling: act greedily on one stochastic pass
      const auto mask = net::sample_masks(state.online, state.config, rng);
      return greedy(net::forward(state.online, obs, mask));
    }
    return eps_pick(cfg.eps.at(state.step),
                    net::forward_weight_avg(state.online, state.config, obs));
  }

  // evaluation
  if (cfg.weight_based()) {
    if (cfg.eps.eval_eps > 0.0) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (u(rng) < cfg.eps.eval_eps) {
        std::uniform_int_distribution<int> pick(0, n_actions - 1);
        return pick(rng);
      }
    }
    const VectorXd w = wdqn_weights(state.online, state.config, obs, cfg.mc_samples, rng);
    return greedy(w);
  }
  return eps_pick(cfg.eps.eval_eps, net::forward_weight_avg(state.online, state.config, obs));
}

double weight_entropy(const VectorXd& weights) {
  if (weights.size() == 0) throw std::invalid_argument("weight_entropy: empty vector");
  double sum = 0.0, h = 0.0;
  for (int i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    if (!(w >= 0.0 && w <= 1.0 + 1e-12) || !std::isfinite(w))
      throw std::invalid_argument("weight_entropy: entries must lie in [0,1]");
    sum += w;
    if (w > 0.0) h -= w * std::log(w);
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("weight_entropy: weights must sum to 1");
  return h;
}

}  // namespace wq::agent
