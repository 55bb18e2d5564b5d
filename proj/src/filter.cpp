#include "igdf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace igdf {

void FilterConfig::validate() const {
  if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("FilterConfig: xi must be in (0, 1]");
  if (alpha < 0.0) throw std::invalid_argument("FilterConfig: alpha must be >= 0");
  if (batch_size <= 0 || batch_size % 2 != 0)
    throw std::invalid_argument("FilterConfig: batch_size must be even and positive");
}

int FilterConfig::source_batch_size() const {
  return static_cast<int>(std::ceil(batch_size / (2.0 * xi)));
}

FilteredBatch rank_and_filter(const Encoder& enc, const std::vector<Transition>& raw_src_batch,
                              double xi) {
  if (raw_src_batch.empty()) throw std::invalid_argument("rank_and_filter: empty batch");
  if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("rank_and_filter: xi must be in (0, 1]");
  const int n = static_cast<int>(raw_src_batch.size());
  const int keep = std::min(n, static_cast<int>(std::ceil(xi * n)));

  const std::vector<double> scores = score_batch(enc, raw_src_batch);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });

  FilteredBatch out;
  out.omega.assign(n, false);
  std::vector<int> kept_idx(order.begin(), order.begin() + keep);
  std::sort(kept_idx.begin(), kept_idx.end());  // kept in original order
  out.threshold = scores[order[keep - 1]];
  for (int i : kept_idx) {
    out.omega[i] = true;
    out.kept.push_back(raw_src_batch[i]);
    out.kept_scores.push_back(scores[i]);
  }
  return out;
}

std::vector<double> td_weights(const FilteredBatch& batch, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("td_weights: alpha must be >= 0");
  std::vector<double> w(batch.kept_scores.size(), 1.0);
  if (alpha > 0.0)
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = alpha * batch.kept_scores[i];
  return w;
}

namespace {

Matrix encode_sas(const Encoder& layout, const std::vector<Transition>& batch) {
  const int sa = phi_input_dim(layout), sn = psi_input_dim(layout);
  Matrix x(static_cast<int>(batch.size()), sa + sn);
  for (int i = 0; i < x.rows; ++i) {
    auto row = x.row(i);
    encode_state_action(layout, batch[i], row.subspan(0, sa));
    encode_next_state(layout, batch[i], row.subspan(sa, sn));
  }
  return x;
}

Matrix encode_sa(const Encoder& layout, const std::vector<Transition>& batch) {
  Matrix x(static_cast<int>(batch.size()), phi_input_dim(layout));
  for (int i = 0; i < x.rows; ++i) encode_state_action(layout, batch[i], x.row(i));
  return x;
}

// log q(tar) - log q(src) = logit_tar - logit_src for a 2-way softmax.
double logit_gap(const Mlp& net, const Matrix& input) {
  const Matrix out = mlp_forward(net, input);
  return out(0, 1) - out(0, 0);
}

}  // namespace

double DaraModel::delta_r_raw(const Transition& t) const {
  return logit_gap(sas, encode_sas(layout, {t})) - logit_gap(sa, encode_sa(layout, {t}));
}

double DaraModel::delta_r(const Transition& t) const {
  return std::clamp(delta_r_raw(t), -10.0, 10.0);
}

double classifier_loss(const Mlp& net, const Matrix& inputs, const std::vector<int>& labels,
                       MlpGrads* grads) {
  if (static_cast<int>(labels.size()) != inputs.rows)
    throw std::invalid_argument("classifier_loss: label count mismatch");
  if (net.out_dim() != 2) throw std::invalid_argument("classifier_loss: need 2 output logits");
  const int n = inputs.rows;
  ForwardCache cache;
  const Matrix logits = mlp_forward(net, inputs, grads ? &cache : nullptr);
  double loss = 0.0;
  Matrix dlogits(n, 2);
  for (int i = 0; i < n; ++i) {
    const double mx = std::max(logits(i, 0), logits(i, 1));
    const double z = std::exp(logits(i, 0) - mx) + std::exp(logits(i, 1) - mx);
    const double lse = mx + std::log(z);
    loss += lse - logits(i, labels[i]);
    for (int c = 0; c < 2; ++c)
      dlogits(i, c) = (std::exp(logits(i, c) - lse) - (c == labels[i] ? 1.0 : 0.0)) / n;
  }
  if (grads) mlp_backward(net, cache, dlogits, *grads);
  return loss / n;
}

DaraModel dara_baseline_train(const DaraConfig& cfg, const Dataset& d_src, const Dataset& d_tar) {
  if (d_src.kind != d_tar.kind)
    throw std::invalid_argument("dara_baseline_train: dataset kind mismatch");
  if (d_src.transitions.empty() || d_tar.transitions.empty())
    throw std::invalid_argument("dara_baseline_train: need both domains");

  ContrastiveConfig layout_cfg;
  layout_cfg.seed = cfg.seed;
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
  DaraModel model;
  model.layout = make_encoder(layout_cfg, d_tar, n_states, n_actions);

  Rng rng(cfg.seed ^ 0xda7aULL);
  const int sa = phi_input_dim(model.layout), sn = psi_input_dim(model.layout);
  model.sas = Mlp::init({sa + sn, cfg.hidden, cfg.hidden, 2}, rng);
  model.sa = Mlp::init({sa, cfg.hidden, cfg.hidden, 2}, rng);
  AdamState opt_sas = AdamState::make(model.sas.n_params(), cfg.learning_rate);
  AdamState opt_sa = AdamState::make(model.sa.n_params(), cfg.learning_rate);

  for (int step = 0; step < cfg.update_count; ++step) {
    std::vector<Transition> batch;
    std::vector<int> labels;
    for (int i = 0; i < cfg.batch_size / 2; ++i) {
      batch.push_back(d_src.transitions[rng.index(d_src.transitions.size())]);
      labels.push_back(0);
      batch.push_back(d_tar.transitions[rng.index(d_tar.transitions.size())]);
      labels.push_back(1);
    }
    MlpGrads g_sas = MlpGrads::zeros_like(model.sas);
    MlpGrads g_sa = MlpGrads::zeros_like(model.sa);
    classifier_loss(model.sas, encode_sas(model.layout, batch), labels, &g_sas);
    classifier_loss(model.sa, encode_sa(model.layout, batch), labels, &g_sa);
    adam_step_mlp(opt_sas, model.sas, g_sas);
    adam_step_mlp(opt_sa, model.sa, g_sa);
  }
  return model;
}

}  // namespace igdf
