#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "igdf/contrastive.hpp"
#include "igdf/envs.hpp"
#include "igdf/filter.hpp"
#include "igdf/mdp.hpp"
#include "igdf/nn.hpp"

namespace igdf {

struct IqlConfig {
  double tau = 0.7;              // expectile
  double awr_temperature = 3.0;  // lambda
  double discount = 0.99;
  double mu = 0.005;             // target-network tracking rate
  double q_lr = 3e-4;
  double v_lr = 3e-4;
  double pi_lr = 3e-4;
  int td_steps = 5000;
  int policy_steps = 2000;
  int batch_size = 256;  // combined B; each half is B/2
  int hidden = 256;
  bool interleaved = false;  // run the policy step alongside each TD step
  int eval_every = 0;        // 0 = no periodic evaluation
  std::uint64_t seed = 0;

  void validate() const;
};

// Q(s,a), its tracked copy, V(s), and the policy head. Tabular policies are
// softmax logits over actions; continuous policies emit [mean, log_std] with
// log_std clamped to [-5, 2].
struct IqlNets {
  Encoder layout;  // input encodings only; no scores involved
  Mlp q;
  Mlp q_target;
  Mlp v;
  Mlp policy;
};

IqlNets make_iql_nets(const IqlConfig& cfg, const Dataset& reference, int n_states = -1,
                      int n_actions = -1);

// |tau - 1(u < 0)| * u^2.
double expectile_loss(double u, double tau);

// Expectile value loss against the frozen target Q over the batch.
double v_loss(const IqlNets& nets, const std::vector<Transition>& batch, double tau,
              MlpGrads* grads = nullptr);

// 1/2 mean_tar[td^2] + 1/2 mean_src[w_i td_i^2] with td = r + gamma
// (1 - terminal) V(s') - Q(s,a); V is frozen. Either half may be empty.
double q_loss(const IqlNets& nets, const std::vector<Transition>& tar_batch,
              const std::vector<Transition>& src_batch, const std::vector<double>& src_weights,
              double discount, MlpGrads* grads = nullptr);

// Negative advantage-weighted log-likelihood; weights exp(lambda (Q_hat - V))
// clipped at 100.
double awr_loss(const IqlNets& nets, const std::vector<Transition>& batch, double lambda,
                MlpGrads* grads = nullptr);

// theta_hat <- (1 - mu) theta_hat + mu theta.
void polyak(IqlNets& nets, double mu);

double policy_log_prob(const IqlNets& nets, const Transition& t);
TabularPolicy extract_tabular_policy(const IqlNets& nets, bool greedy);
std::vector<double> policy_mean_action(const IqlNets& nets, std::span<const double> state);

struct RlMetricsRow {
  int step = 0;
  std::string phase;  // "td" or "awr"
  double v_loss = 0.0;
  double q_loss = 0.0;
  double pi_loss = 0.0;
  bool has_eval = false;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
};

using EvalCallback = std::function<void(const IqlNets&, RlMetricsRow&)>;

// Full pipeline: per step draw a source batch of ceil(B/(2 xi)), keep the top
// xi quantile by encoder score, weight by alpha h, and combine with a B/2
// target batch. enc may be null only when d_src is empty (target-only mode).
IqlNets train_igdf_iql(const IqlConfig& cfg, const FilterConfig& fcfg, const Encoder* enc,
                       const Dataset& d_src, const Dataset& d_tar,
                       std::vector<RlMetricsRow>* metrics = nullptr,
                       const EvalCallback& eval = nullptr);

// Merged-batch baseline: B/2 source + B/2 target, all weights 1, no scoring.
// Draws batches in the same order as train_igdf_iql so that xi = 1 with
// uniform weights reproduces it bit for bit under a shared seed.
IqlNets train_naive_iql(const IqlConfig& cfg, const Dataset& d_src, const Dataset& d_tar,
                        std::vector<RlMetricsRow>* metrics = nullptr,
                        const EvalCallback& eval = nullptr);

struct EvalResult {
  double mean = 0.0;
  double std_dev = 0.0;
};

// Undiscounted-return rollouts, one RNG stream per episode, stochastic
// (softmax) or greedy action selection.
EvalResult evaluate_policy(const TabularMDP& mdp, const IqlNets& nets, int n_episodes, int horizon,
                           std::uint64_t seed, bool greedy = false);
EvalResult evaluate_policy(const TabularMDP& mdp, const TabularPolicy& policy, int n_episodes,
                           int horizon, std::uint64_t seed);
// Continuous rollouts use the clipped mean action.
EvalResult evaluate_policy(const ContinuousEnv& env, const IqlNets& nets, int n_episodes,
                           std::uint64_t seed);

void save_iql_nets_file(const std::string& dir_prefix, const IqlNets& nets, std::uint64_t seed);
IqlNets load_iql_nets_file(const std::string& dir_prefix);

}  // namespace igdf
