#pragma once

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

// Minimal fully-connected network with Bernoulli / Concrete dropout, weight
// decay, manual backpropagation, Adam, and Monte Carlo dropout inference.
namespace wq::net {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class DropoutMode { None, Bernoulli, Concrete };

// Per-hidden-layer dropout setting. In concrete mode the logit of the drop
// probability is the trainable parameter.
struct LayerDropout {
  DropoutMode mode = DropoutMode::None;
  double rate = 0.0;   // bernoulli drop probability
  double logit = 0.0;  // concrete: logit of p

  double drop_prob() const;
};

struct DropoutConfig {
  std::vector<LayerDropout> layers;  // one entry per hidden layer
  double temperature = 10.0;         // concrete relaxation beta
  double weight_decay = 0.0;         // lambda
  double dropout_reg = 0.0;          // zeta
  double precision_tau = 1.0;        // scales the reported predictive variance only

  bool any_concrete() const;
  bool any_dropout() const;
};

// Layered parameters; weights[l] maps width l to width l+1, hidden layers
// use the rectifier.
struct MLPParams {
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
  int hidden_count() const { return layer_count() - 1; }
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }

  // He-uniform init for the given widths [in, h1, ..., out].
  static MLPParams he_init(const std::vector<int>& widths, std::mt19937_64& rng);
};

// Uniform dropout config across all hidden layers of `params`; mode None
// yields an empty-effect config with the regularizer coefficients set.
DropoutConfig make_dropout_config(const MLPParams& params, DropoutMode mode, double p,
                                  double weight_decay = 0.0, double dropout_reg = 0.0,
                                  double temperature = 10.0, bool last_hidden_only = false);

// One mask realization per hidden layer. Multiplier 1 keeps a unit, 0 drops
// it; concrete masks are continuous in (0,1) and keep their uniform draws so
// gradients (and finite-difference oracles) can be replayed through them.
struct DropoutMask {
  std::vector<VectorXd> mult;
  std::vector<VectorXd> uniforms;  // concrete layers only (empty otherwise)
};

struct Gradients {
  std::vector<MatrixXd> d_weights;
  std::vector<VectorXd> d_biases;
  std::vector<double> d_logits;  // per hidden layer; zero for non-concrete layers

  static Gradients zeros_like(const MLPParams& params);
  void setZero();
};

// Concrete relaxation: multiplier = 1 - sigmoid(beta * (logit + log u - log(1-u))).
double concrete_multiplier(double logit, double u, double beta);

DropoutMask sample_masks(const MLPParams& params, const DropoutConfig& config,
                         std::mt19937_64& rng);

// Recomputes concrete multipliers from the stored uniforms under the current
// logits; bernoulli multipliers are reused as constants.
void rematerialize_mask(const MLPParams& params, const DropoutConfig& config,
                        DropoutMask& mask);

VectorXd forward(const MLPParams& params, const VectorXd& x, const DropoutMask& mask);

// Dropout-free pass with no mask applied (all units kept).
VectorXd forward_plain(const MLPParams& params, const VectorXd& x);

// Weight-averaging estimate: unit outputs of each dropout layer scaled by
// the keep probability 1 - p_l, no sampling.
VectorXd forward_weight_avg(const MLPParams& params, const DropoutConfig& config,
                            const VectorXd& x);

struct McForward {
  MatrixXd samples;  // T x n_actions
  VectorXd mean;
  VectorXd variance;  // biased, divide-by-T
};

McForward mc_forward(const MLPParams& params, const DropoutConfig& config,
                     const VectorXd& x, int t_samples, std::mt19937_64& rng);

// Batched stochastic passes for a set of inputs: n_inputs * t_samples columns
// with independent masks, returned as one matrix per input stacked row-block
// wise. Numerically identical to calling mc_forward per input in order.
std::vector<McForward> mc_forward_batch(const MLPParams& params, const DropoutConfig& config,
                                        const std::vector<VectorXd>& xs, int t_samples,
                                        std::mt19937_64& rng);

// Gradients of upstream . f(x) w.r.t. parameters, plus (concrete mode) the
// dropout logits through the relaxation and the entropy regularizer term
// zeta * K_l * H(p_l). Weight decay is NOT included here; loss assembly adds it.
Gradients backward(const MLPParams& params, const DropoutConfig& config, const VectorXd& x,
                   const DropoutMask& mask, const VectorXd& upstream);

enum class LossKind { Mse, Huber };
inline constexpr double kHuberDelta = 1.0;

// Mean over the batch of per-sample TD losses (y_i - Q(x_i, a_i))^2 (or
// Huber) + lambda sum ||W_l||^2 - zeta sum K_l H(p_l). Masks are replayed
// through their stored uniforms in concrete mode, so the value is an exact
// function of (params, logits) for fixed draws. Gradients are written to
// `grads` when non-null.
double loss_and_gradients(const MLPParams& params, const DropoutConfig& config,
                          const std::vector<VectorXd>& xs, const std::vector<int>& actions,
                          const VectorXd& targets, std::vector<DropoutMask>& masks,
                          LossKind loss, Gradients* grads);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<MatrixXd> m_w, v_w;
  std::vector<VectorXd> m_b, v_b;
  std::vector<double> m_l, v_l;
  long step = 0;

  static AdamState zeros_like(const MLPParams& params);
};

// Adam update of parameters and (concrete mode) dropout logits.
void optimizer_step(MLPParams& params, DropoutConfig& config, const Gradients& grads,
                    AdamState& state, const AdamConfig& adam);

// -p log p - (1-p) log(1-p), natural log; p must lie strictly in (0,1).
double entropy_bernoulli(double p);

// Versioned portable text checkpoint of shapes, row-major values and the
// dropout configuration.
void save_checkpoint(const std::string& path, const MLPParams& params,
                     const DropoutConfig& config);
void load_checkpoint(const std::string& path, MLPParams& params, DropoutConfig& config);

}  // namespace wq::net
