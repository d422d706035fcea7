#include "wq/net.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace wq::net {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_shapes(const MLPParams& params, const VectorXd& x) {
  if (x.size() != params.input_dim())
    throw std::invalid_argument("forward: input size " + std::to_string(x.size()) +
                                " does not match network input " +
                                std::to_string(params.input_dim()));
}

void check_mask(const MLPParams& params, const DropoutMask& mask) {
  if (static_cast<int>(mask.mult.size()) != params.hidden_count())
    throw std::invalid_argument("mask layer count does not match network");
  for (int l = 0; l < params.hidden_count(); ++l)
    if (mask.mult[l].size() != params.weights[l].rows())
      throw std::invalid_argument("mask width mismatch at hidden layer " + std::to_string(l));
}

bool layer_active(const DropoutConfig& config, int l) {
  if (l >= static_cast<int>(config.layers.size())) return false;
  const auto& d = config.layers[l];
  if (d.mode == DropoutMode::None) return false;
  if (d.mode == DropoutMode::Bernoulli && d.rate == 0.0) return false;
  return true;
}

}  // namespace

double LayerDropout::drop_prob() const {
  switch (mode) {
    case DropoutMode::None: return 0.0;
    case DropoutMode::Bernoulli: return rate;
    case DropoutMode::Concrete: return sigmoid(logit);
  }
  return 0.0;
}

bool DropoutConfig::any_concrete() const {
  for (const auto& l : layers)
    if (l.mode == DropoutMode::Concrete) return true;
  return false;
}

bool DropoutConfig::any_dropout() const {
  for (const auto& l : layers)
    if (l.mode != DropoutMode::None && l.drop_prob() > 0.0) return true;
  return false;
}

MLPParams MLPParams::he_init(const std::vector<int>& widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw std::invalid_argument("he_init: need at least two widths");
  MLPParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double limit = std::sqrt(6.0 / widths[l]);
    std::uniform_real_distribution<double> u(-limit, limit);
    MatrixXd w(widths[l + 1], widths[l]);
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(VectorXd::Zero(widths[l + 1]));
  }
  return p;
}

DropoutConfig make_dropout_config(const MLPParams& params, DropoutMode mode, double p,
                                  double weight_decay, double dropout_reg,
                                  double temperature, bool last_hidden_only) {
  DropoutConfig cfg;
  cfg.temperature = temperature;
  cfg.weight_decay = weight_decay;
  cfg.dropout_reg = dropout_reg;
  for (int l = 0; l < params.hidden_count(); ++l) {
    LayerDropout d;
    const bool active = !last_hidden_only || l == params.hidden_count() - 1;
    d.mode = active ? mode : DropoutMode::None;
    if (d.mode == DropoutMode::Bernoulli) d.rate = p;
    if (d.mode == DropoutMode::Concrete) {
      if (p <= 0.0 || p >= 1.0)
        throw std::invalid_argument("concrete dropout rate must lie strictly in (0,1)");
      d.logit = std::log(p / (1.0 - p));
    }
    cfg.layers.push_back(d);
  }
  return cfg;
}

Gradients Gradients::zeros_like(const MLPParams& params) {
  Gradients g;
  for (const auto& w : params.weights) g.d_weights.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : params.biases) g.d_biases.push_back(VectorXd::Zero(b.size()));
  g.d_logits.assign(params.hidden_count(), 0.0);
  return g;
}

void Gradients::setZero() {
  for (auto& w : d_weights) w.setZero();
  for (auto& b : d_biases) b.setZero();
  for (auto& l : d_logits) l = 0.0;
}

double concrete_multiplier(double logit, double u, double beta) {
  const double z = beta * (logit + std::log(u) - std::log1p(-u));
  return 1.0 - sigmoid(z);
}

DropoutMask sample_masks(const MLPParams& params, const DropoutConfig& config,
                         std::mt19937_64& rng) {
  DropoutMask mask;
  mask.mult.resize(params.hidden_count());
  mask.uniforms.resize(params.hidden_count());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int l = 0; l < params.hidden_count(); ++l) {
    const int k = static_cast<int>(params.weights[l].rows());
    if (!layer_active(config, l)) {
      mask.mult[l] = VectorXd::Ones(k);
      continue;
    }
    const auto& d = config.layers[l];
    mask.mult[l].resize(k);
    if (d.mode == DropoutMode::Bernoulli) {
      for (int i = 0; i < k; ++i) mask.mult[l][i] = uni(rng) < d.rate ? 0.0 : 1.0;
    } else {
      mask.uniforms[l].resize(k);
      for (int i = 0; i < k; ++i) {
        double u = uni(rng);
        // keep u strictly inside (0,1) so the logistic transform stays finite
        u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
        mask.uniforms[l][i] = u;
        mask.mult[l][i] = concrete_multiplier(d.logit, u, config.temperature);
      }
    }
  }
  return mask;
}

void rematerialize_mask(const MLPParams& params, const DropoutConfig& config,
                        DropoutMask& mask) {
  for (int l = 0; l < params.hidden_count(); ++l) {
    if (l >= static_cast<int>(config.layers.size())) continue;
    const auto& d = config.layers[l];
    if (d.mode != DropoutMode::Concrete) continue;
    for (int i = 0; i < mask.uniforms[l].size(); ++i)
      mask.mult[l][i] = concrete_multiplier(d.logit, mask.uniforms[l][i], config.temperature);
  }
}

VectorXd forward(const MLPParams& params, const VectorXd& x, const DropoutMask& mask) {
  check_shapes(params, x);
  check_mask(params, mask);
  VectorXd h = x;
  for (int l = 0; l < params.hidden_count(); ++l)
    h = ((params.weights[l] * h + params.biases[l]).cwiseMax(0.0).array() *
         mask.mult[l].array())
            .matrix();
  return params.weights.back() * h + params.biases.back();
}

VectorXd forward_plain(const MLPParams& params, const VectorXd& x) {
  check_shapes(params, x);
  VectorXd h = x;
  for (int l = 0; l < params.hidden_count(); ++l)
    h = (params.weights[l] * h + params.biases[l]).cwiseMax(0.0);
  return params.weights.back() * h + params.biases.back();
}

VectorXd forward_weight_avg(const MLPParams& params, const DropoutConfig& config,
                            const VectorXd& x) {
  check_shapes(params, x);
  VectorXd h = x;
  for (int l = 0; l < params.hidden_count(); ++l) {
    h = (params.weights[l] * h + params.biases[l]).cwiseMax(0.0);
    if (l < static_cast<int>(config.layers.size()))
      h *= 1.0 - config.layers[l].drop_prob();
  }
  return params.weights.back() * h + params.biases.back();
}

std::vector<McForward> mc_forward_batch(const MLPParams& params, const DropoutConfig& config,
                                        const std::vector<VectorXd>& xs, int t_samples,
                                        std::mt19937_64& rng) {
  if (t_samples < 1) throw std::invalid_argument("mc_forward: T must be >= 1");
  const int n = static_cast<int>(xs.size());
  const int cols = n * t_samples;
  MatrixXd h(params.input_dim(), cols);
  for (int i = 0; i < n; ++i) {
    check_shapes(params, xs[i]);
    h.middleCols(i * t_samples, t_samples) = xs[i].replicate(1, t_samples);
  }

  // Masks are drawn input-major, then layer, then pass, then unit, matching
  // sequential per-input calls.
  std::vector<std::vector<MatrixXd>> masks(n);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    masks[i].resize(params.hidden_count());
    for (int l = 0; l < params.hidden_count(); ++l) {
      if (!layer_active(config, l)) continue;
      const int k = static_cast<int>(params.weights[l].rows());
      MatrixXd m(k, t_samples);
      const auto& d = config.layers[l];
      if (d.mode == DropoutMode::Bernoulli) {
        for (int t = 0; t < t_samples; ++t)
          for (int r = 0; r < k; ++r) m(r, t) = uni(rng) < d.rate ? 0.0 : 1.0;
      } else {
        for (int t = 0; t < t_samples; ++t)
          for (int r = 0; r < k; ++r)
            m(r, t) = std::min(std::max(uni(rng), 1e-12), 1.0 - 1e-12);
        const double beta = config.temperature;
        m = 1.0 -
            (1.0 + (-beta * (d.logit + m.array().log() - (1.0 - m.array()).log())).exp())
                .inverse();
      }
      masks[i][l] = std::move(m);
    }
  }

  for (int l = 0; l < params.hidden_count(); ++l) {
    h = ((params.weights[l] * h).colwise() + params.biases[l]).cwiseMax(0.0);
    for (int i = 0; i < n; ++i)
      if (masks[i][l].size() > 0)
        h.middleCols(i * t_samples, t_samples).array() *= masks[i][l].array();
  }
  const MatrixXd out = (params.weights.back() * h).colwise() + params.biases.back();

  std::vector<McForward> results(n);
  for (int i = 0; i < n; ++i) {
    McForward& r = results[i];
    r.samples = out.middleCols(i * t_samples, t_samples).transpose();
    r.mean = r.samples.colwise().mean();
    r.variance = (r.samples.array().square().colwise().mean().transpose() -
                  r.mean.array().square())
                     .cwiseMax(0.0)
                     .matrix();
  }
  return results;
}

McForward mc_forward(const MLPParams& params, const DropoutConfig& config, const VectorXd& x,
                     int t_samples, std::mt19937_64& rng) {
  return mc_forward_batch(params, config, {x}, t_samples, rng)[0];
}

Gradients backward(const MLPParams& params, const DropoutConfig& config, const VectorXd& x,
                   const DropoutMask& mask, const VectorXd& upstream) {
  check_shapes(params, x);
  check_mask(params, mask);
  if (upstream.size() != params.output_dim())
    throw std::invalid_argument("backward: upstream size does not match network output");

  const int hidden = params.hidden_count();
  std::vector<VectorXd> rect(hidden);  // post-rectifier, pre-mask
  std::vector<VectorXd> post(hidden);  // post-mask
  VectorXd h = x;
  for (int l = 0; l < hidden; ++l) {
    rect[l] = (params.weights[l] * h + params.biases[l]).cwiseMax(0.0);
    post[l] = (rect[l].array() * mask.mult[l].array()).matrix();
    h = post[l];
  }

  Gradients g = Gradients::zeros_like(params);
  VectorXd delta = upstream;  // gradient w.r.t. current layer output
  g.d_weights.back() = delta * (hidden ? post.back() : x).transpose();
  g.d_biases.back() = delta;
  VectorXd dh = params.weights.back().transpose() * delta;

  for (int l = hidden - 1; l >= 0; --l) {
    // dh is the gradient w.r.t. the post-mask activation of layer l
    if (l < static_cast<int>(config.layers.size()) &&
        config.layers[l].mode == DropoutMode::Concrete) {
      const double beta = config.temperature;
      double dl = 0.0;
      for (int k = 0; k < dh.size(); ++k) {
        const double mlt = mask.mult[l][k];
        // d mult / d logit = -beta * m * (1 - m)
        dl += dh[k] * rect[l][k] * (-beta * mlt * (1.0 - mlt));
      }
      g.d_logits[l] = dl;
    }
    VectorXd da = (dh.array() * mask.mult[l].array()).matrix();
    for (int k = 0; k < da.size(); ++k)
      if (rect[l][k] <= 0.0) da[k] = 0.0;  // rectifier gate
    g.d_weights[l] = da * (l == 0 ? x : post[l - 1]).transpose();
    g.d_biases[l] = da;
    if (l > 0) dh = params.weights[l].transpose() * da;
  }

  // Entropy regularizer -zeta * K_l * H(p_l): d/dlogit = zeta * K_l * logit * p(1-p)
  if (config.dropout_reg != 0.0) {
    for (int l = 0; l < hidden; ++l) {
      if (l >= static_cast<int>(config.layers.size())) continue;
      const auto& d = config.layers[l];
      if (d.mode != DropoutMode::Concrete) continue;
      const double p = sigmoid(d.logit);
      const double k = static_cast<double>(params.weights[l].rows());
      g.d_logits[l] += config.dropout_reg * k * d.logit * p * (1.0 - p);
    }
  }
  return g;
}

double entropy_bernoulli(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("entropy_bernoulli: p must lie strictly in (0,1)");
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

double loss_and_gradients(const MLPParams& params, const DropoutConfig& config,
                          const std::vector<VectorXd>& xs, const std::vector<int>& actions,
                          const VectorXd& targets, std::vector<DropoutMask>& masks,
                          LossKind loss, Gradients* grads) {
  const int m = static_cast<int>(xs.size());
  if (m == 0 || static_cast<int>(actions.size()) != m || targets.size() != m ||
      static_cast<int>(masks.size()) != m)
    throw std::invalid_argument("loss_and_gradients: batch size mismatch");

  if (grads) grads->setZero();
  Gradients sample_grad;
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    rematerialize_mask(params, config, masks[i]);
    const VectorXd q = forward(params, xs[i], masks[i]);
    const double diff = targets[i] - q[actions[i]];
    double dq;  // dL/dQ(s_i, a_i)
    if (loss == LossKind::Mse) {
      total += diff * diff;
      dq = -2.0 * diff;
    } else {
      const double ad = std::abs(diff);
      total += ad <= kHuberDelta ? 0.5 * diff * diff
                                 : kHuberDelta * (ad - 0.5 * kHuberDelta);
      dq = -std::clamp(diff, -kHuberDelta, kHuberDelta);
    }
    if (grads) {
      VectorXd upstream = VectorXd::Zero(params.output_dim());
      upstream[actions[i]] = dq;
      sample_grad = backward(params, config, xs[i], masks[i], upstream);
      for (std::size_t l = 0; l < grads->d_weights.size(); ++l) {
        grads->d_weights[l] += sample_grad.d_weights[l];
        grads->d_biases[l] += sample_grad.d_biases[l];
      }
      for (std::size_t l = 0; l < grads->d_logits.size(); ++l)
        grads->d_logits[l] += sample_grad.d_logits[l];
    }
  }
  total /= m;
  if (grads) {
    for (auto& w : grads->d_weights) w /= m;
    for (auto& b : grads->d_biases) b /= m;
    for (auto& l : grads->d_logits) l /= m;
  }

  // lambda * sum ||W_l||^2, contributing exactly 2*lambda*W to the gradient
  if (config.weight_decay != 0.0) {
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      total += config.weight_decay * params.weights[l].squaredNorm();
      if (grads) grads->d_weights[l] += 2.0 * config.weight_decay * params.weights[l];
    }
  }
  // -zeta * K_l * H(p_l); the gradient is already inside backward()
  if (config.dropout_reg != 0.0) {
    for (std::size_t l = 0; l < config.layers.size(); ++l) {
      if (config.layers[l].mode != DropoutMode::Concrete) continue;
      const double k = static_cast<double>(params.weights[l].rows());
      total -= config.dropout_reg * k * entropy_bernoulli(config.layers[l].drop_prob());
    }
  }
  return total;
}

AdamState AdamState::zeros_like(const MLPParams& params) {
  AdamState s;
  for (const auto& w : params.weights) {
    s.m_w.push_back(MatrixXd::Zero(w.rows(), w.cols()));
    s.v_w.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : params.biases) {
    s.m_b.push_back(VectorXd::Zero(b.size()));
    s.v_b.push_back(VectorXd::Zero(b.size()));
  }
  s.m_l.assign(params.hidden_count(), 0.0);
  s.v_l.assign(params.hidden_count(), 0.0);
  return s;
}

void optimizer_step(MLPParams& params, DropoutConfig& config, const Gradients& grads,
                    AdamState& state, const AdamConfig& adam) {
  if (grads.d_weights.size() != params.weights.size())
    throw std::invalid_argument("optimizer_step: gradient shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  const auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = (adam.beta2 * v.array() + (1.0 - adam.beta2) * g.array().square()).matrix();
    p.array() -= adam.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + adam.epsilon);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l], state.m_w[l], state.v_w[l], grads.d_weights[l]);
    update(params.biases[l], state.m_b[l], state.v_b[l], grads.d_biases[l]);
  }
  for (std::size_t l = 0; l < config.layers.size(); ++l) {
    if (config.layers[l].mode != DropoutMode::Concrete) continue;
    double& m = state.m_l[l];
    double& v = state.v_l[l];
    const double g = grads.d_logits[l];
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g * g;
    config.layers[l].logit -= adam.lr * (m / bc1) / (std::sqrt(v / bc2) + adam.epsilon);
  }
}

void save_checkpoint(const std::string& path, const MLPParams& params,
                     const DropoutConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << std::setprecision(17);
  out << "wqnet 1\n";
  out << "layers " << params.layer_count() << "\n";
  for (int l = 0; l < params.layer_count(); ++l) {
    const auto& w = params.weights[l];
    out << "W " << w.rows() << " " << w.cols() << "\n";
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) out << w(r, c) << (c + 1 == w.cols() ? '\n' : ' ');
    const auto& b = params.biases[l];
    out << "b " << b.size() << "\n";
    for (int i = 0; i < b.size(); ++i) out << b[i] << (i + 1 == b.size() ? '\n' : ' ');
  }
  out << "dropout " << config.layers.size() << " " << config.temperature << " "
      << config.weight_decay << " " << config.dropout_reg << " " << config.precision_tau
      << "\n";
  for (const auto& d : config.layers)
    out << static_cast<int>(d.mode) << " " << d.rate << " " << d.logit << "\n";
  if (!out) throw std::runtime_error("write failure on checkpoint: " + path);
}

void load_checkpoint(const std::string& path, MLPParams& params, DropoutConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "wqnet" || version != 1)
    throw std::runtime_error("unrecognized checkpoint header in " + path);
  std::string tok;
  int layers = 0;
  in >> tok >> layers;
  if (tok != "layers" || layers < 1) throw std::runtime_error("bad layer count in " + path);
  params = MLPParams{};
  for (int l = 0; l < layers; ++l) {
    long rows = 0, cols = 0;
    in >> tok >> rows >> cols;
    if (tok != "W" || rows < 1 || cols < 1) throw std::runtime_error("bad weight block");
    MatrixXd w(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) in >> w(r, c);
    long bn = 0;
    in >> tok >> bn;
    if (tok != "b" || bn != rows) throw std::runtime_error("bad bias block");
    VectorXd b(bn);
    for (long i = 0; i < bn; ++i) in >> b[i];
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  std::size_t ndrop = 0;
  in >> tok >> ndrop;
  if (tok != "dropout") throw std::runtime_error("bad dropout block");
  config = DropoutConfig{};
  in >> config.temperature >> config.weight_decay >> config.dropout_reg >>
      config.precision_tau;
  for (std::size_t l = 0; l < ndrop; ++l) {
    int mode = 0;
    LayerDropout d;
    in >> mode >> d.rate >> d.logit;
    d.mode = static_cast<DropoutMode>(mode);
    config.layers.push_back(d);
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
}

}  // namespace wq::net
