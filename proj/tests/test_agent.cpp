#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "wq/agent.hpp"

using namespace wq::agent;
namespace net = wq::net;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// network that ignores its input: zero weights, final bias = q
net::MLPParams constant_net(const VectorXd& q, int in_dim) {
  net::MLPParams p;
  p.weights = {MatrixXd::Zero(4, in_dim), MatrixXd::Zero(q.size(), 4)};
  p.biases = {VectorXd::Zero(4), q};
  return p;
}

std::vector<Transition> chain_transitions(int n, int obs_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.s = VectorXd::NullaryExpr(obs_dim, [&](int) { return g(rng); });
    t.s_next = VectorXd::NullaryExpr(obs_dim, [&](int) { return g(rng); });
    t.a = i % 3;
    t.r = g(rng);
    t.done = i % 7 == 0;
    out.push_back(t);
  }
  return out;
}

std::vector<const Transition*> ptrs(const std::vector<Transition>& v) {
  std::vector<const Transition*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

bool params_equal(const net::MLPParams& a, const net::MLPParams& b) {
  for (std::size_t l = 0; l < a.weights.size(); ++l)
    if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
  return true;
}

}  // namespace

TEST_CASE("dqn_target hand traces") {
  VectorXd q(2);
  q << 1.0, 3.0;
  const auto params = constant_net(q, 2);
  const auto cfg = net::make_dropout_config(params, net::DropoutMode::None, 0.0);

  auto ts = chain_transitions(4, 2, 1);
  for (auto& t : ts) t.done = true;
  const auto all_done = dqn_target(ptrs(ts), params, cfg, 0.5);
  for (int i = 0; i < 4; ++i) CHECK(all_done[i] == ts[i].r);

  auto live = chain_transitions(4, 2, 2);
  for (auto& t : live) t.done = false;
  const auto myopic = dqn_target(ptrs(live), params, cfg, 0.0);
  for (int i = 0; i < 4; ++i) CHECK(myopic[i] == live[i].r);

  Transition t;
  t.s = VectorXd::Zero(2);
  t.s_next = VectorXd::Zero(2);
  t.a = 0;
  t.r = 1.0;
  t.done = false;
  const auto y = dqn_target({&t}, params, cfg, 0.5);
  CHECK(y[0] == doctest::Approx(2.5).epsilon(1e-15));  // 1 + 0.5 * max(1,3)
}

TEST_CASE("ddqn_target decouples selection from evaluation") {
  VectorXd online_q(2), target_q(2);
  online_q << 1.0, 0.0;  // online argmax = 0
  target_q << 0.0, 9.0;
  const auto online = constant_net(online_q, 2);
  const auto target = constant_net(target_q, 2);
  const auto cfg = net::make_dropout_config(online, net::DropoutMode::None, 0.0);

  Transition t;
  t.s = VectorXd::Zero(2);
  t.s_next = VectorXd::Zero(2);
  t.a = 0;
  t.r = 0.0;
  t.done = false;
  CHECK(ddqn_target({&t}, online, cfg, target, cfg, 1.0)[0] == 0.0);

  // theta = theta-: identical to dqn_target
  auto batch = chain_transitions(6, 2, 3);
  const auto a = ddqn_target(ptrs(batch), target, cfg, target, cfg, 0.9);
  const auto b = dqn_target(ptrs(batch), target, cfg, 0.9);
  CHECK(a == b);

  for (auto& tr : batch) tr.done = true;
  const auto done = ddqn_target(ptrs(batch), online, cfg, target, cfg, 0.9);
  for (int i = 0; i < 6; ++i) CHECK(done[i] == batch[i].r);
}

TEST_CASE("wdqn_weights") {
  std::mt19937_64 rng(5);
  VectorXd q(3);
  q << 0.2, 0.9, 0.1;
  const auto params = constant_net(q, 2);

  // no dropout: indicator of the deterministic argmax, any T
  const auto none = net::make_dropout_config(params, net::DropoutMode::None, 0.0);
  const auto ind = wdqn_weights(params, none, VectorXd::Zero(2), 25, rng);
  CHECK(ind[1] == 1.0);
  CHECK(ind[0] == 0.0);

  // real dropout: always a probability vector; T = 1 is an exact indicator
  auto net_rng = std::mt19937_64(8);
  const auto deep = net::MLPParams::he_init({2, 10, 3}, net_rng);
  const auto cfg = net::make_dropout_config(deep, net::DropoutMode::Bernoulli, 0.4);
  const auto w1 = wdqn_weights(deep, cfg, VectorXd::Random(2), 1, rng);
  CHECK(w1.maxCoeff() == 1.0);
  CHECK(w1.sum() == 1.0);
  const auto w = wdqn_weights(deep, cfg, VectorXd::Random(2), 64, rng);
  CHECK(w.minCoeff() >= 0.0);
  CHECK(std::abs(w.sum() - 1.0) < 1e-12);
}

TEST_CASE("wdqn_weights is near-uniform on a symmetric two-action network") {
  // two groups of 12 hidden units with identical input weights; action 0 sums
  // the first group, action 1 the second. Under i.i.d. masks the two outputs
  // are exchangeable, so each action is the argmax with probability ~0.5
  // (exact ties have probability 2^-12 per pass).
  std::mt19937_64 init(3);
  net::MLPParams p = net::MLPParams::he_init({2, 24, 2}, init);
  p.weights[0] = p.weights[0].cwiseAbs();  // keep every unit active (distinct h_i > 0)
  p.biases[0].setConstant(0.1);
  p.weights[0].bottomRows(12) = p.weights[0].topRows(12);
  p.weights[1].setZero();
  p.weights[1].row(0).head(12).setOnes();
  p.weights[1].row(1).tail(12).setOnes();
  p.biases[1].setZero();
  const auto cfg = net::make_dropout_config(p, net::DropoutMode::Bernoulli, 0.5);
  std::mt19937_64 rng(10);
  const int T = 20000;
  const auto w = wdqn_weights(p, cfg, VectorXd::Random(2).cwiseAbs(), T, rng);
  const double se = std::sqrt(0.25 / T);
  CHECK(std::abs(w[0] - 0.5) < 3 * se + std::pow(2.0, -12.0));
}

TEST_CASE("wdqn_target properties") {
  std::mt19937_64 rng(6);
  auto init = std::mt19937_64(9);
  const auto params = net::MLPParams::he_init({2, 8, 3}, init);
  const auto cfg = net::make_dropout_config(params, net::DropoutMode::Bernoulli, 0.3);

  // all done: y = r
  auto batch = chain_transitions(5, 2, 10);
  for (auto& t : batch) t.done = true;
  const auto y = wdqn_target(ptrs(batch), params, cfg, 0.9, 20, rng);
  for (int i = 0; i < 5; ++i) CHECK(y[i] == batch[i].r);

  // no dropout: reduces exactly to dqn_target
  const auto none = net::make_dropout_config(params, net::DropoutMode::None, 0.0);
  auto live = chain_transitions(5, 2, 11);
  std::mt19937_64 r2(1);
  CHECK(wdqn_target(ptrs(live), params, none, 0.9, 20, r2) ==
        dqn_target(ptrs(live), params, none, 0.9));

  // convex-combination bound via the shared sample matrix
  std::mt19937_64 r3(2);
  std::vector<VectorXd> weights;
  auto trs = chain_transitions(50, 2, 12);
  for (auto& t : trs) t.done = false;
  const auto targets = wdqn_target(ptrs(trs), params, cfg, 1.0, 30, r3, &weights);
  CHECK(weights.size() == trs.size());
  for (std::size_t i = 0; i < trs.size(); ++i) {
    CHECK(weights[i].minCoeff() >= 0.0);
    CHECK(std::abs(weights[i].sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("weights_from_samples bootstrap term is a convex combination") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int rep = 0; rep < 500; ++rep) {
    MatrixXd samples = MatrixXd::NullaryExpr(16, 4, [&](int, int) { return g(rng); });
    const VectorXd w = weights_from_samples(samples);
    const VectorXd mean = samples.colwise().mean();
    const double boot = w.dot(mean);
    CHECK(boot >= mean.minCoeff() - 1e-15);
    CHECK(boot <= mean.maxCoeff() + 1e-15);
  }
}

TEST_CASE("weight_entropy") {
  VectorXd ind = VectorXd::Zero(4);
  ind[2] = 1.0;
  CHECK(weight_entropy(ind) == 0.0);
  CHECK(weight_entropy(VectorXd::Constant(5, 0.2)) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
  VectorXd w(3);
  w << 0.5, 0.25, 0.25;
  CHECK(weight_entropy(w) == doctest::Approx(1.0397).epsilon(1e-4));
  CHECK_THROWS_AS(weight_entropy(VectorXd::Constant(3, 0.5)), std::invalid_argument);
}

TEST_CASE("replay buffer ring semantics and uniform sampling") {
  ReplayBuffer buf(100, 10);
  auto ts = chain_transitions(130, 2, 20);
  for (int i = 0; i < 9; ++i) buf.add(ts[i]);
  CHECK_FALSE(buf.ready());
  for (int i = 9; i < 130; ++i) buf.add(ts[i]);
  CHECK(buf.size() == 100);
  CHECK(buf.ready());

  std::mt19937_64 rng(21);
  std::vector<long> counts(100, 0);
  const long draws = 100000;
  long sampled = 0;
  while (sampled < draws) {
    for (const auto* t : buf.sample(10, rng)) {
      // identify the slot by its reward (all rewards distinct w.p. 1)
      for (int i = 0; i < 100; ++i)
        if (buf[i].r == t->r) {
          ++counts[i];
          break;
        }
      ++sampled;
    }
  }
  const double p = 1.0 / 100;
  const double se = std::sqrt(p * (1 - p) / double(draws));
  for (long c : counts) CHECK(std::abs(double(c) / double(draws) - p) < 4 * se);
}

TEST_CASE("train_step determinism, cadence and not-ready signaling") {
  AgentConfig cfg;
  cfg.algo = Algo::DQN;
  cfg.gamma = 0.99;
  cfg.target_period = 7;
  cfg.batch_size = 8;
  cfg.memory_min = 16;
  cfg.memory_max = 64;
  cfg.adam.lr = 1e-3;

  const auto dropout_probe = [] {
    std::mt19937_64 tmp(0);
    return net::make_dropout_config(net::MLPParams::he_init({3, 6, 2}, tmp),
                                    net::DropoutMode::None, 0.0);
  }();

  const auto run = [&](int steps) {
    TrainState state = TrainState::init({3, 6, 2}, dropout_probe, 99);
    ReplayBuffer buf(cfg.memory_max, cfg.memory_min);
    for (const auto& t : chain_transitions(40, 3, 30)) buf.add(t);
    std::vector<double> losses;
    for (int i = 0; i < steps; ++i) losses.push_back(train_step(state, cfg, buf));
    return std::pair{losses, state};
  };

  const auto [l1, s1] = run(100);
  const auto [l2, s2] = run(100);
  CHECK(l1 == l2);
  CHECK(params_equal(s1.online, s2.online));

  // theta- changes only at multiples of C
  TrainState state = TrainState::init({3, 6, 2}, dropout_probe, 99);
  ReplayBuffer buf(cfg.memory_max, cfg.memory_min);
  for (const auto& t : chain_transitions(40, 3, 30)) buf.add(t);
  net::MLPParams frozen = state.target;
  for (int i = 1; i <= 21; ++i) {
    train_step(state, cfg, buf);
    if (i % cfg.target_period == 0) {
      CHECK(params_equal(state.target, state.online));
      frozen = state.target;
    } else {
      CHECK(params_equal(state.target, frozen));
    }
  }

  ReplayBuffer starved(64, 16);
  starved.add(chain_transitions(1, 3, 31)[0]);
  TrainState fresh = TrainState::init({3, 6, 2}, dropout_probe, 1);
  CHECK_THROWS_AS(train_step(fresh, cfg, starved), std::runtime_error);
}

TEST_CASE("WDQN with dropout disabled walks in lockstep with DQN") {
  const auto dropout_none = [] {
    std::mt19937_64 tmp(0);
    return net::make_dropout_config(net::MLPParams::he_init({3, 8, 2}, tmp),
                                    net::DropoutMode::None, 0.0);
  }();
  AgentConfig dqn;
  dqn.algo = Algo::DQN;
  dqn.batch_size = 8;
  dqn.memory_min = 16;
  dqn.memory_max = 64;
  dqn.mc_samples = 50;
  AgentConfig wdqn = dqn;
  wdqn.algo = Algo::WDQN;

  TrainState a = TrainState::init({3, 8, 2}, dropout_none, 7);
  TrainState b = TrainState::init({3, 8, 2}, dropout_none, 7);
  ReplayBuffer buf(64, 16);
  for (const auto& t : chain_transitions(50, 3, 40)) buf.add(t);
  for (int i = 0; i < 50; ++i) {
    const double la = train_step(a, dqn, buf);
    const double lb = train_step(b, wdqn, buf);
    CHECK(la == lb);
  }
  CHECK(params_equal(a.online, b.online));
}

TEST_CASE("act modes") {
  const auto dropout_none = [] {
    std::mt19937_64 tmp(0);
    return net::make_dropout_config(net::MLPParams::he_init({2, 6, 3}, tmp),
                                    net::DropoutMode::None, 0.0);
  }();
  AgentConfig cfg;
  cfg.algo = Algo::DQN;
  cfg.eps = {0.0, 0.0, 1, 0.0};
  TrainState state = TrainState::init({2, 6, 3}, dropout_none, 3);
  std::mt19937_64 rng(1);

  const VectorXd obs = VectorXd::Random(2);
  int expected;
  net::forward_weight_avg(state.online, state.config, obs).maxCoeff(&expected);
  CHECK(act(state, cfg, obs, ActMode::Train, rng) == expected);
  CHECK(act(state, cfg, obs, ActMode::Eval, rng) == expected);

  // Thompson sampling with p = 0 is the same deterministic greedy choice
  AgentConfig ts = cfg;
  ts.algo = Algo::WDQN_TS;
  TrainState state_ts = TrainState::init({2, 6, 3}, dropout_none, 3);
  CHECK(act(state_ts, ts, obs, ActMode::Train, rng) == expected);

  // WDQN eval action = argmax of wdqn_weights under the same rng stream
  std::mt19937_64 init(44);
  const auto deep = net::MLPParams::he_init({2, 10, 3}, init);
  const auto dcfg = net::make_dropout_config(deep, net::DropoutMode::Bernoulli, 0.3);
  AgentConfig wq_cfg;
  wq_cfg.algo = Algo::WDQN;
  wq_cfg.mc_samples = 16;
  wq_cfg.eps = {1.0, 1.0, 1, 0.0};  // eval epsilon 0: pure weight argmax
  TrainState wstate = TrainState::init({2, 10, 3}, dcfg, 5);
  wstate.online = deep;
  std::mt19937_64 r1(77), r2(77);
  const int chosen = act(wstate, wq_cfg, obs, ActMode::Eval, r1);
  int ref;
  wdqn_weights(wstate.online, wstate.config, obs, wq_cfg.mc_samples, r2).maxCoeff(&ref);
  CHECK(chosen == ref);
}
