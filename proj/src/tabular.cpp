#include "wq/tabular.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wq::tabular {

namespace {

void check_indices(const QTable& table, const Transition& t) {
  if (t.s < 0 || t.s >= table.n_states() || t.s_next < 0 || t.s_next >= table.n_states() ||
      t.a < 0 || t.a >= table.n_actions())
    throw std::invalid_argument("transition indices out of range");
}

}  // namespace

double RewardDist::mean() const {
  switch (kind) {
    case Kind::Constant: return a;
    case Kind::Gaussian: return a;
    case Kind::Bernoulli: return a * b;
  }
  return 0.0;
}

double RewardDist::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::Constant: return a;
    case Kind::Gaussian: {
      std::normal_distribution<double> d(a, b);
      return d(rng);
    }
    case Kind::Bernoulli: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      return u(rng) < a ? b : 0.0;
    }
  }
  return 0.0;
}

void TabularMDP::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must lie in [0,1]");
  if (static_cast<int>(transition.size()) != n_states ||
      static_cast<int>(reward.size()) != n_states ||
      static_cast<int>(terminal.size()) != n_states)
    throw std::invalid_argument("MDP field sizes disagree with n_states");
  for (int s = 0; s < n_states; ++s) {
    if (transition[s].rows() != n_actions || transition[s].cols() != n_states)
      throw std::invalid_argument("transition matrix shape mismatch at state " +
                                  std::to_string(s));
    for (int a = 0; a < n_actions; ++a) {
      const double sum = transition[s].row(a).sum();
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("transition row does not sum to 1 at (s=" +
                                    std::to_string(s) + ", a=" + std::to_string(a) + ")");
    }
  }
}

QTable::QTable(int n_states, int n_actions)
    : q(MatrixXd::Zero(n_states, n_actions)),
      visits(Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_states, n_actions)),
      target_mean(MatrixXd::Zero(n_states, n_actions)),
      target_m2(MatrixXd::Zero(n_states, n_actions)) {}

double QTable::target_variance(int s, int a) const {
  const long n = visits(s, a);
  if (n < 2) return 0.0;
  return target_m2(s, a) / static_cast<double>(n - 1);
}

void QTable::record_target(int s, int a, double y) {
  const long n = ++visits(s, a);
  const double d = y - target_mean(s, a);
  target_mean(s, a) += d / static_cast<double>(n);
  target_m2(s, a) += d * (y - target_mean(s, a));
}

int argmax_lowest(const VectorXd& row) {
  int best = 0;
  for (int i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

void q_learning_step(QTable& table, const Transition& t, double gamma, double alpha) {
  check_indices(table, t);
  const double boot = t.done ? 0.0 : table.q.row(t.s_next).maxCoeff();
  const double y = t.r + gamma * boot;
  table.q(t.s, t.a) += alpha * (y - table.q(t.s, t.a));
  table.record_target(t.s, t.a, y);
}

void double_q_step(DoubleQTable& tables, const Transition& t, double gamma, double alpha,
                   std::mt19937_64& coin) {
  check_indices(tables.a, t);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  QTable& upd = u(coin) < 0.5 ? tables.a : tables.b;
  QTable& other = &upd == &tables.a ? tables.b : tables.a;
  double boot = 0.0;
  if (!t.done) {
    const int sel = argmax_lowest(upd.q.row(t.s_next));
    boot = other.q(t.s_next, sel);
  }
  const double y = t.r + gamma * boot;
  upd.q(t.s, t.a) += alpha * (y - upd.q(t.s, t.a));
  upd.record_target(t.s, t.a, y);
}

std::vector<mev::GaussianBelief> state_beliefs(const QTable& table, int s,
                                               double prior_scale) {
  std::vector<mev::GaussianBelief> beliefs(table.n_actions());
  for (int a = 0; a < table.n_actions(); ++a) {
    const long n = table.visits(s, a);
    beliefs[a].mean = table.q(s, a);
    beliefs[a].count = std::max(n, 1L);
    // Fewer than 2 visits leaves the target variance undefined; fall back
    // to the maximal-uncertainty prior scale.
    beliefs[a].std_error =
        n < 2 ? prior_scale
              : std::sqrt(table.target_variance(s, a) / static_cast<double>(n));
  }
  return beliefs;
}

void wql_step(QTable& table, const Transition& t, double gamma, double alpha,
              const WqlConfig& cfg) {
  check_indices(table, t);
  double boot = 0.0;
  if (!t.done) {
    const auto beliefs = state_beliefs(table, t.s_next, cfg.prior_scale);
    const VectorXd w = mev::we_weights_gaussian(beliefs, cfg.quad);
    boot = mev::weighted_estimator(beliefs, w);
  }
  const double y = t.r + gamma * boot;
  table.q(t.s, t.a) += alpha * (y - table.q(t.s, t.a));
  table.record_target(t.s, t.a, y);
}

MatrixXd value_iteration(const TabularMDP& mdp, double tol, long max_iters) {
  if (tol <= 0.0) throw std::invalid_argument("value_iteration: tol must be positive");
  mdp.validate();
  MatrixXd expected_r(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      expected_r(s, a) = mdp.reward[s][a].mean();

  MatrixXd q = MatrixXd::Zero(mdp.n_states, mdp.n_actions);
  VectorXd vmax(mdp.n_states);
  for (long it = 0; it < max_iters; ++it) {
    for (int s = 0; s < mdp.n_states; ++s)
      vmax[s] = mdp.terminal[s] ? 0.0 : q.row(s).maxCoeff();
    double residual = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
      if (mdp.terminal[s]) continue;
      for (int a = 0; a < mdp.n_actions; ++a) {
        const double next = expected_r(s, a) + mdp.gamma * mdp.transition[s].row(a).dot(vmax);
        residual = std::max(residual, std::abs(next - q(s, a)));
        q(s, a) = next;
      }
    }
    if (residual < tol) return q;
  }
  throw std::runtime_error("value_iteration: no convergence within iteration cap");
}

int epsilon_greedy(const VectorXd& qrow, double epsilon, std::mt19937_64& rng) {
  if (qrow.size() == 0) throw std::invalid_argument("epsilon_greedy: empty action row");
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < epsilon) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(qrow.size()) - 1);
      return pick(rng);
    }
  }
  return argmax_lowest(qrow);
}

}  // namespace wq::tabular
