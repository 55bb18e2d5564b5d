#include "igdf/offline_rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace igdf {

namespace {
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kAwrWeightCap = 100.0;
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 ln(2 pi)
}  // namespace

void IqlConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("IqlConfig: tau must be in (0, 1)");
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("IqlConfig: mu must be in (0, 1]");
  if (!(discount >= 0.0 && discount < 1.0))
    throw std::invalid_argument("IqlConfig: discount must be in [0, 1)");
  if (batch_size <= 0 || batch_size % 2 != 0)
    throw std::invalid_argument("IqlConfig: batch_size must be even and positive");
  if (td_steps < 0 || policy_steps < 0 || hidden <= 0)
    throw std::invalid_argument("IqlConfig: counts must be non-negative");
  if (q_lr <= 0.0 || v_lr <= 0.0 || pi_lr <= 0.0)
    throw std::invalid_argument("IqlConfig: learning rates must be positive");
}

IqlNets make_iql_nets(const IqlConfig& cfg, const Dataset& reference, int n_states,
                      int n_actions) {
  cfg.validate();
  ContrastiveConfig layout_cfg;
  layout_cfg.seed = cfg.seed;
  IqlNets nets;
  nets.layout = make_encoder(layout_cfg, reference, n_states, n_actions);
  Rng rng(cfg.seed ^ 0x191ULL);
  const int sa = phi_input_dim(nets.layout);
  const int sd = psi_input_dim(nets.layout);
  const int pi_out = nets.layout.kind == Kind::tabular ? nets.layout.n_actions
                                                       : 2 * nets.layout.action_dim;
  nets.q = Mlp::init({sa, cfg.hidden, cfg.hidden, 1}, rng);
  nets.q_target = nets.q;
  nets.v = Mlp::init({sd, cfg.hidden, cfg.hidden, 1}, rng);
  nets.policy = Mlp::init({sd, cfg.hidden, cfg.hidden, pi_out}, rng);
  return nets;
}

double expectile_loss(double u, double tau) {
  const double w = u < 0.0 ? 1.0 - tau : tau;
  return w * u * u;
}

namespace {

Matrix encode_sa_batch(const Encoder& layout, const std::vector<Transition>& batch) {
  Matrix x(static_cast<int>(batch.size()), phi_input_dim(layout));
  for (int i = 0; i < x.rows; ++i) encode_state_action(layout, batch[i], x.row(i));
  return x;
}

Matrix encode_s_batch(const Encoder& layout, const std::vector<Transition>& batch) {
  Matrix x(static_cast<int>(batch.size()), psi_input_dim(layout));
  for (int i = 0; i < x.rows; ++i) {
    auto row = x.row(i);
    std::fill(row.begin(), row.end(), 0.0);
    if (layout.kind == Kind::tabular)
      row[batch[i].s] = 1.0;
    else
      std::copy(batch[i].sv.begin(), batch[i].sv.end(), row.begin());
  }
  return x;
}

Matrix encode_s_next_batch(const Encoder& layout, const std::vector<Transition>& batch) {
  Matrix x(static_cast<int>(batch.size()), psi_input_dim(layout));
  for (int i = 0; i < x.rows; ++i) encode_next_state(layout, batch[i], x.row(i));
  return x;
}

}  // namespace

double v_loss(const IqlNets& nets, const std::vector<Transition>& batch, double tau,
              MlpGrads* grads) {
  if (batch.empty()) throw std::invalid_argument("v_loss: empty batch");
  const int n = static_cast<int>(batch.size());
  const Matrix qt = mlp_forward(nets.q_target, encode_sa_batch(nets.layout, batch));
  ForwardCache cache;
  const Matrix v = mlp_forward(nets.v, encode_s_batch(nets.layout, batch), grads ? &cache : nullptr);
  double loss = 0.0;
  Matrix dv(n, 1);
  for (int i = 0; i < n; ++i) {
    const double u = qt(i, 0) - v(i, 0);
    loss += expectile_loss(u, tau);
    const double w = u < 0.0 ? 1.0 - tau : tau;
    dv(i, 0) = -2.0 * w * u / n;
  }
  if (grads) mlp_backward(nets.v, cache, dv, *grads);
  return loss / n;
}

double q_loss(const IqlNets& nets, const std::vector<Transition>& tar_batch,
              const std::vector<Transition>& src_batch, const std::vector<double>& src_weights,
              double discount, MlpGrads* grads) {
  if (src_weights.size() != src_batch.size())
    throw std::invalid_argument("q_loss: weight/batch length mismatch");
  if (tar_batch.empty() && src_batch.empty())
    throw std::invalid_argument("q_loss: both halves empty");

  std::vector<Transition> all(tar_batch);
  all.insert(all.end(), src_batch.begin(), src_batch.end());
  const int n_tar = static_cast<int>(tar_batch.size());
  const int n_src = static_cast<int>(src_batch.size());
  const int n = n_tar + n_src;
  // Equal halves when both are present; otherwise the lone half carries full
  // weight so the empty-source case is plain IQL.
  const double c_tar = n_src == 0 ? 1.0 : 0.5;
  const double c_src = n_tar == 0 ? 1.0 : 0.5;

  const Matrix v_next = mlp_forward(nets.v, encode_s_next_batch(nets.layout, all));
  ForwardCache cache;
  const Matrix q = mlp_forward(nets.q, encode_sa_batch(nets.layout, all), grads ? &cache : nullptr);

  double loss = 0.0;
  Matrix dq(n, 1);
  for (int i = 0; i < n; ++i) {
    const bool is_tar = i < n_tar;
    const double mask = all[i].terminal ? 0.0 : 1.0;
    const double td = all[i].reward + discount * mask * v_next(i, 0) - q(i, 0);
    const double w = is_tar ? 1.0 : src_weights[i - n_tar];
    const double c = (is_tar ? c_tar / std::max(1, n_tar) : c_src / std::max(1, n_src)) * w;
    loss += c * td * td;
    dq(i, 0) = -2.0 * c * td;
  }
  if (grads) mlp_backward(nets.q, cache, dq, *grads);
  return loss;
}

double policy_log_prob(const IqlNets& nets, const Transition& t) {
  const Matrix out = mlp_forward(nets.policy, encode_s_batch(nets.layout, {t}));
  if (nets.layout.kind == Kind::tabular) {
    double mx = out(0, 0);
    for (int a = 1; a < out.cols; ++a) mx = std::max(mx, out(0, a));
    double z = 0.0;
    for (int a = 0; a < out.cols; ++a) z += std::exp(out(0, a) - mx);
    return out(0, t.a) - mx - std::log(z);
  }
  const int ad = nets.layout.action_dim;
  double lp = 0.0;
  for (int j = 0; j < ad; ++j) {
    const double ls = std::clamp(out(0, ad + j), kLogStdMin, kLogStdMax);
    const double z = (t.av[j] - out(0, j)) / std::exp(ls);
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
  }
  return lp;
}

double awr_loss(const IqlNets& nets, const std::vector<Transition>& batch, double lambda,
                MlpGrads* grads) {
  if (batch.empty()) throw std::invalid_argument("awr_loss: empty batch");
  const int n = static_cast<int>(batch.size());

  const Matrix qt = mlp_forward(nets.q_target, encode_sa_batch(nets.layout, batch));
  const Matrix v = mlp_forward(nets.v, encode_s_batch(nets.layout, batch));
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = std::min(std::exp(lambda * (qt(i, 0) - v(i, 0))), kAwrWeightCap);

  ForwardCache cache;
  const Matrix out =
      mlp_forward(nets.policy, encode_s_batch(nets.layout, batch), grads ? &cache : nullptr);
  double loss = 0.0;
  Matrix dout(n, out.cols);

  if (nets.layout.kind == Kind::tabular) {
    for (int i = 0; i < n; ++i) {
      double mx = out(i, 0);
      for (int a = 1; a < out.cols; ++a) mx = std::max(mx, out(i, a));
      double z = 0.0;
      for (int a = 0; a < out.cols; ++a) z += std::exp(out(i, a) - mx);
      const double lse = mx + std::log(z);
      loss += -w[i] * (out(i, batch[i].a) - lse);
      for (int a = 0; a < out.cols; ++a) {
        const double p = std::exp(out(i, a) - lse);
        dout(i, a) = w[i] * (p - (a == batch[i].a ? 1.0 : 0.0)) / n;
      }
    }
  } else {
    const int ad = nets.layout.action_dim;
    for (int i = 0; i < n; ++i) {
      double lp = 0.0;
      for (int j = 0; j < ad; ++j) {
        const double raw = out(i, ad + j);
        const double ls = std::clamp(raw, kLogStdMin, kLogStdMax);
        const double sigma = std::exp(ls);
        const double z = (batch[i].av[j] - out(i, j)) / sigma;
        lp += -0.5 * z * z - ls - kHalfLog2Pi;
        dout(i, j) = -w[i] * (z / sigma) / n;
        const bool clamped = raw < kLogStdMin || raw > kLogStdMax;
        dout(i, ad + j) = clamped ? 0.0 : -w[i] * (z * z - 1.0) / n;
      }
      loss += -w[i] * lp;
    }
  }
  if (grads) mlp_backward(nets.policy, cache, dout, *grads);
  return loss / n;
}

void polyak(IqlNets& nets, double mu) {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("polyak: mu must be in (0, 1]");
  for (int l = 0; l < nets.q.n_layers(); ++l) {
    for (std::size_t i = 0; i < nets.q.weights[l].data.size(); ++i)
      nets.q_target.weights[l].data[i] =
          (1.0 - mu) * nets.q_target.weights[l].data[i] + mu * nets.q.weights[l].data[i];
    for (std::size_t i = 0; i < nets.q.biases[l].size(); ++i)
      nets.q_target.biases[l][i] =
          (1.0 - mu) * nets.q_target.biases[l][i] + mu * nets.q.biases[l][i];
  }
}

TabularPolicy extract_tabular_policy(const IqlNets& nets, bool greedy) {
  if (nets.layout.kind != Kind::tabular)
    throw std::invalid_argument("extract_tabular_policy: continuous nets");
  const int ns = nets.layout.n_states, na = nets.layout.n_actions;
  Matrix x(ns, ns);
  for (int s = 0; s < ns; ++s) x(s, s) = 1.0;
  const Matrix out = mlp_forward(nets.policy, x);
  TabularPolicy pi;
  pi.n_states = ns;
  pi.n_actions = na;
  pi.probs.assign(static_cast<std::size_t>(ns) * na, 0.0);
  for (int s = 0; s < ns; ++s) {
    if (greedy) {
      int best = 0;
      for (int a = 1; a < na; ++a)
        if (out(s, a) > out(s, best)) best = a;
      pi.pref(s, best) = 1.0;
    } else {
      double mx = out(s, 0);
      for (int a = 1; a < na; ++a) mx = std::max(mx, out(s, a));
      double z = 0.0;
      for (int a = 0; a < na; ++a) z += std::exp(out(s, a) - mx);
      for (int a = 0; a < na; ++a) pi.pref(s, a) = std::exp(out(s, a) - mx) / z;
    }
  }
  return pi;
}

std::vector<double> policy_mean_action(const IqlNets& nets, std::span<const double> state) {
  if (nets.layout.kind != Kind::continuous)
    throw std::invalid_argument("policy_mean_action: tabular nets");
  Matrix x(1, psi_input_dim(nets.layout));
  std::copy(state.begin(), state.end(), x.row(0).begin());
  const Matrix out = mlp_forward(nets.policy, x);
  std::vector<double> a(nets.layout.action_dim);
  for (int j = 0; j < nets.layout.action_dim; ++j) a[j] = std::clamp(out(0, j), -1.0, 1.0);
  return a;
}

namespace {

std::vector<Transition> draw_batch(const Dataset& d, int n, Rng& rng) {
  std::vector<Transition> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(d.transitions[rng.index(d.transitions.size())]);
  return out;
}

struct StepBatches {
  std::vector<Transition> tar;
  std::vector<Transition> src;        // post-filter
  std::vector<double> src_weights;
  std::vector<Transition> combined;   // tar then src
};

// Shared per-step batch assembly: source raw batch first, then target, so
// the naive and filtered trainers consume the RNG identically.
StepBatches assemble_step(const Dataset& d_src, const Dataset& d_tar, const Encoder* enc,
                          const FilterConfig* fcfg, int batch_size, Rng& rng) {
  StepBatches b;
  const int half = batch_size / 2;
  if (!d_src.transitions.empty()) {
    const int raw_n = fcfg ? fcfg->source_batch_size() : half;
    std::vector<Transition> raw = draw_batch(d_src, raw_n, rng);
    if (fcfg) {
      FilteredBatch fb = rank_and_filter(*enc, raw, fcfg->xi);
      b.src = std::move(fb.kept);
      b.src_weights = td_weights(fb, fcfg->alpha);
    } else {
      b.src = std::move(raw);
      b.src_weights.assign(b.src.size(), 1.0);
    }
  }
  b.tar = draw_batch(d_tar, half, rng);
  b.combined = b.tar;
  b.combined.insert(b.combined.end(), b.src.begin(), b.src.end());
  return b;
}

IqlNets train_iql_impl(const IqlConfig& cfg, const FilterConfig* fcfg, const Encoder* enc,
                       const Dataset& d_src, const Dataset& d_tar,
                       std::vector<RlMetricsRow>* metrics, const EvalCallback& eval) {
  cfg.validate();
  if (fcfg) fcfg->validate();
  if (d_tar.transitions.empty()) throw std::invalid_argument("train_iql: empty target dataset");
  if (fcfg && !d_src.transitions.empty() && enc == nullptr)
    throw std::invalid_argument("train_iql: filtering a non-empty source needs an encoder");

  // One state/action space across both datasets (tabular).
  int n_states = -1, n_actions = -1;
  if (d_tar.kind == Kind::tabular) {
    int ms = 0, ma = 0;
    for (const Dataset* d : {&d_src, &d_tar})
      for (const auto& t : d->transitions) {
        ms = std::max({ms, t.s, t.s_next});
        ma = std::max(ma, t.a);
      }
    n_states = ms + 1;
    n_actions = ma + 1;
  }
  IqlNets nets = make_iql_nets(cfg, d_tar, n_states, n_actions);

  AdamState opt_v = AdamState::make(nets.v.n_params(), cfg.v_lr);
  AdamState opt_q = AdamState::make(nets.q.n_params(), cfg.q_lr);
  AdamState opt_pi = AdamState::make(nets.policy.n_params(), cfg.pi_lr);
  Rng rng(cfg.seed);

  auto record = [&](int step, const char* phase, double vl, double ql, double pl) {
    if (!metrics) return;
    RlMetricsRow row;
    row.step = step;
    row.phase = phase;
    row.v_loss = vl;
    row.q_loss = ql;
    row.pi_loss = pl;
    if (eval && cfg.eval_every > 0 && step % cfg.eval_every == 0) eval(nets, row);
    metrics->push_back(std::move(row));
  };

  for (int step = 1; step <= cfg.td_steps; ++step) {
    StepBatches b = assemble_step(d_src, d_tar, enc, fcfg, cfg.batch_size, rng);
    MlpGrads gv = MlpGrads::zeros_like(nets.v);
    const double vl = v_loss(nets, b.combined, cfg.tau, &gv);
    adam_step_mlp(opt_v, nets.v, gv);
    MlpGrads gq = MlpGrads::zeros_like(nets.q);
    const double ql = q_loss(nets, b.tar, b.src, b.src_weights, cfg.discount, &gq);
    adam_step_mlp(opt_q, nets.q, gq);
    polyak(nets, cfg.mu);
    double pl = 0.0;
    if (cfg.interleaved) {
      MlpGrads gp = MlpGrads::zeros_like(nets.policy);
      pl = awr_loss(nets, b.combined, cfg.awr_temperature, &gp);
      adam_step_mlp(opt_pi, nets.policy, gp);
    }
    record(step, "td", vl, ql, pl);
  }
  if (!cfg.interleaved) {
    for (int step = 1; step <= cfg.policy_steps; ++step) {
      StepBatches b = assemble_step(d_src, d_tar, enc, fcfg, cfg.batch_size, rng);
      MlpGrads gp = MlpGrads::zeros_like(nets.policy);
      const double pl = awr_loss(nets, b.combined, cfg.awr_temperature, &gp);
      adam_step_mlp(opt_pi, nets.policy, gp);
      record(cfg.td_steps + step, "awr", 0.0, 0.0, pl);
    }
  }
  return nets;
}

}  // namespace

IqlNets train_igdf_iql(const IqlConfig& cfg, const FilterConfig& fcfg, const Encoder* enc,
                       const Dataset& d_src, const Dataset& d_tar,
                       std::vector<RlMetricsRow>* metrics, const EvalCallback& eval) {
  return train_iql_impl(cfg, &fcfg, enc, d_src, d_tar, metrics, eval);
}

IqlNets train_naive_iql(const IqlConfig& cfg, const Dataset& d_src, const Dataset& d_tar,
                        std::vector<RlMetricsRow>* metrics, const EvalCallback& eval) {
  return train_iql_impl(cfg, nullptr, nullptr, d_src, d_tar, metrics, eval);
}

namespace {

EvalResult summarize(const std::vector<double>& returns) {
  double sum = 0.0;
  for (double r : returns) sum += r;
  const double mean = sum / returns.size();
  double sq = 0.0;
  for (double r : returns) sq += (r - mean) * (r - mean);
  EvalResult res;
  res.mean = mean;
  res.std_dev = std::sqrt(sq / returns.size());
  return res;
}

}  // namespace

EvalResult evaluate_policy(const TabularMDP& mdp, const TabularPolicy& policy, int n_episodes,
                           int horizon, std::uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate_policy: need episodes");
  policy.validate();
  Rng base(seed);
  std::vector<double> returns;
  std::vector<double> row(mdp.n_actions);
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng rng = base.split(ep);
    int s = rng.categorical(mdp.initial_dist);
    double ret = 0.0;
    for (int t = 0; t < horizon; ++t) {
      for (int a = 0; a < mdp.n_actions; ++a) row[a] = policy.p(s, a);
      const int a = rng.categorical(row);
      ret += mdp.r(s, a);
      std::vector<double> next(mdp.n_states);
      for (int s2 = 0; s2 < mdp.n_states; ++s2) next[s2] = mdp.p(s, a, s2);
      s = rng.categorical(next);
    }
    returns.push_back(ret);
  }
  return summarize(returns);
}

EvalResult evaluate_policy(const TabularMDP& mdp, const IqlNets& nets, int n_episodes, int horizon,
                           std::uint64_t seed, bool greedy) {
  return evaluate_policy(mdp, extract_tabular_policy(nets, greedy), n_episodes, horizon, seed);
}

EvalResult evaluate_policy(const ContinuousEnv& env, const IqlNets& nets, int n_episodes,
                           std::uint64_t seed) {
  if (nets.layout.kind != Kind::continuous)
    throw std::invalid_argument("evaluate_policy: tabular nets on continuous env");
  Rng base(seed);
  std::vector<double> returns;
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng rng = base.split(ep);
    std::vector<double> s = env.reset(rng);
    double ret = 0.0;
    for (int t = 0; t < env.horizon; ++t) {
      const std::vector<double> a = policy_mean_action(nets, s);
      auto [s_next, r] = env.step(s, a, rng);
      ret += r;
      s = std::move(s_next);
    }
    returns.push_back(ret);
  }
  return summarize(returns);
}

void save_iql_nets_file(const std::string& dir_prefix, const IqlNets& nets, std::uint64_t seed) {
  save_encoder_file(dir_prefix + "layout.txt", nets.layout, seed);
  auto save_one = [&](const std::string& name, const Mlp& m) {
    std::string path = dir_prefix + name;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_iql_nets_file: cannot open " + path);
    save_net(f, m, seed);
  };
  save_one("q.txt", nets.q);
  save_one("q_target.txt", nets.q_target);
  save_one("v.txt", nets.v);
  save_one("policy.txt", nets.policy);
}

IqlNets load_iql_nets_file(const std::string& dir_prefix) {
  IqlNets nets;
  nets.layout = load_encoder_file(dir_prefix + "layout.txt");
  auto load_one = [&](const std::string& name) {
    std::string path = dir_prefix + name;
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_iql_nets_file: cannot open " + path);
    return load_net(f);
  };
  nets.q = load_one("q.txt");
  nets.q_target = load_one("q_target.txt");
  nets.v = load_one("v.txt");
  nets.policy = load_one("policy.txt");
  return nets;
}

}  // namespace igdf
