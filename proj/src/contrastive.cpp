#include "igdf/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace igdf {

void ContrastiveConfig::validate() const {
  if (d <= 0) throw std::invalid_argument("ContrastiveConfig: d must be positive");
  if (negatives_per_positive < 1)
    throw std::invalid_argument("ContrastiveConfig: need at least one negative per positive");
  if (batch_size <= 0 || update_count < 0 || hidden <= 0)
    throw std::invalid_argument("ContrastiveConfig: counts must be positive");
  if (learning_rate <= 0.0) throw std::invalid_argument("ContrastiveConfig: bad learning rate");
}

int phi_input_dim(const Encoder& enc) {
  return enc.kind == Kind::tabular ? enc.n_states + enc.n_actions : enc.state_dim + enc.action_dim;
}

int psi_input_dim(const Encoder& enc) {
  return enc.kind == Kind::tabular ? enc.n_states : enc.state_dim;
}

Encoder make_encoder(const ContrastiveConfig& cfg, const Dataset& reference, int n_states,
                     int n_actions) {
  cfg.validate();
  Encoder enc;
  enc.d = cfg.d;
  enc.kind = reference.kind;
  if (reference.kind == Kind::tabular) {
    enc.encoding = StateEncoding::one_hot;
    if (n_states < 0 || n_actions < 0) {
      int ms = 0, ma = 0;
      for (const auto& t : reference.transitions) {
        ms = std::max({ms, t.s, t.s_next});
        ma = std::max(ma, t.a);
      }
      n_states = ms + 1;
      n_actions = ma + 1;
    }
    enc.n_states = n_states;
    enc.n_actions = n_actions;
  } else {
    enc.encoding = StateEncoding::raw_vector;
    enc.state_dim = reference.state_dim;
    enc.action_dim = reference.action_dim;
  }
  Rng rng(cfg.seed ^ 0x5e3c0de5ULL);
  enc.phi = Mlp::init({phi_input_dim(enc), cfg.hidden, cfg.hidden, cfg.d}, rng);
  enc.psi = Mlp::init({psi_input_dim(enc), cfg.hidden, cfg.hidden, cfg.d}, rng);
  return enc;
}

void encode_state_action(const Encoder& enc, const Transition& t, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (enc.kind == Kind::tabular) {
    out[t.s] = 1.0;
    out[enc.n_states + t.a] = 1.0;
  } else {
    std::copy(t.sv.begin(), t.sv.end(), out.begin());
    std::copy(t.av.begin(), t.av.end(), out.begin() + enc.state_dim);
  }
}

void encode_next_state(const Encoder& enc, const Transition& t, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (enc.kind == Kind::tabular)
    out[t.s_next] = 1.0;
  else
    std::copy(t.sv_next.begin(), t.sv_next.end(), out.begin());
}

std::vector<double> score_logits(const Encoder& enc, const std::vector<Transition>& batch) {
  const int n = static_cast<int>(batch.size());
  Matrix phi_in(n, phi_input_dim(enc));
  Matrix psi_in(n, psi_input_dim(enc));
  for (int i = 0; i < n; ++i) {
    encode_state_action(enc, batch[i], phi_in.row(i));
    encode_next_state(enc, batch[i], psi_in.row(i));
  }
  const Matrix phi = normalize_sphere(mlp_forward(enc.phi, phi_in));
  const Matrix psi = normalize_sphere(mlp_forward(enc.psi, psi_in));
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < enc.d; ++c) out[i] += phi(i, c) * psi(i, c);
  return out;
}

std::vector<double> score_batch(const Encoder& enc, const std::vector<Transition>& batch) {
  std::vector<double> out = score_logits(enc, batch);
  for (double& v : out) v = std::exp(v);
  return out;
}

double score(const Encoder& enc, const Transition& t) {
  return score_batch(enc, {t})[0];
}

double nce_loss(const Encoder& enc, const NceBatch& batch, MlpGrads* phi_grads,
                MlpGrads* psi_grads) {
  const int b = static_cast<int>(batch.positives.size());
  if (b == 0) throw std::invalid_argument("nce_loss: empty batch");
  if (batch.negatives.size() != batch.positives.size())
    throw std::invalid_argument("nce_loss: negatives per positive mismatch");
  const int k_minus_1 = static_cast<int>(batch.negatives[0].size());
  if (k_minus_1 < 1) throw std::invalid_argument("nce_loss: empty negative set");
  for (const auto& negs : batch.negatives)
    if (static_cast<int>(negs.size()) != k_minus_1)
      throw std::invalid_argument("nce_loss: ragged negative sets");
  const int k = k_minus_1 + 1;

  Matrix phi_in(b, phi_input_dim(enc));
  Matrix psi_in(b * k, psi_input_dim(enc));
  for (int i = 0; i < b; ++i) {
    encode_state_action(enc, batch.positives[i], phi_in.row(i));
    encode_next_state(enc, batch.positives[i], psi_in.row(i * k));  // candidate 0 = positive
    for (int j = 0; j < k_minus_1; ++j)
      encode_next_state(enc, batch.negatives[i][j], psi_in.row(i * k + 1 + j));
  }

  ForwardCache phi_cache, psi_cache;
  const Matrix phi_raw = mlp_forward(enc.phi, phi_in, &phi_cache);
  const Matrix psi_raw = mlp_forward(enc.psi, psi_in, &psi_cache);
  const Matrix phi = normalize_sphere(phi_raw);
  const Matrix psi = normalize_sphere(psi_raw);

  // logits[i][j] = phi_i . psi_{i,j}; softmax cross-entropy against j = 0.
  Matrix logits(b, k);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int c = 0; c < enc.d; ++c) acc += phi(i, c) * psi(i * k + j, c);
      logits(i, j) = acc;
    }

  double loss = 0.0;
  Matrix dlogits(b, k);
  for (int i = 0; i < b; ++i) {
    double mx = logits(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(logits(i, j) - mx);
    const double lse = mx + std::log(z);
    loss += lse - logits(i, 0);
    for (int j = 0; j < k; ++j)
      dlogits(i, j) = (std::exp(logits(i, j) - lse) - (j == 0 ? 1.0 : 0.0)) / b;
  }
  loss /= b;

  if (phi_grads && psi_grads) {
    Matrix dphi(b, enc.d);
    Matrix dpsi(b * k, enc.d);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < k; ++j) {
        const double g = dlogits(i, j);
        if (g == 0.0) continue;
        for (int c = 0; c < enc.d; ++c) {
          dphi(i, c) += g * psi(i * k + j, c);
          dpsi(i * k + j, c) += g * phi(i, c);
        }
      }
    const Matrix dphi_raw = normalize_sphere_backward(phi_raw, dphi);
    const Matrix dpsi_raw = normalize_sphere_backward(psi_raw, dpsi);
    mlp_backward(enc.phi, phi_cache, dphi_raw, *phi_grads);
    mlp_backward(enc.psi, psi_cache, dpsi_raw, *psi_grads);
  }
  return loss;
}

namespace {

NceBatch assemble_batch(const Dataset& d_src, const Dataset& d_tar, int batch_size, int k_minus_1,
                        Rng& rng) {
  NceBatch batch;
  batch.positives.reserve(batch_size);
  batch.negatives.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    batch.positives.push_back(d_tar.transitions[rng.index(d_tar.transitions.size())]);
    batch.negatives[i].reserve(k_minus_1);
    for (int j = 0; j < k_minus_1; ++j)
      batch.negatives[i].push_back(d_src.transitions[rng.index(d_src.transitions.size())]);
  }
  return batch;
}

}  // namespace

Encoder train_encoder(const ContrastiveConfig& cfg, const Dataset& d_src, const Dataset& d_tar,
                      std::vector<ContrastiveMetricsRow>* metrics) {
  cfg.validate();
  if (d_src.kind != d_tar.kind)
    throw std::invalid_argument("train_encoder: dataset kind mismatch");
  if (d_src.transitions.empty() || d_tar.transitions.empty())
    throw std::invalid_argument("train_encoder: empty dataset");

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
  Encoder enc = make_encoder(cfg, d_tar, n_states, n_actions);

  AdamState phi_opt = AdamState::make(enc.phi.n_params(), cfg.learning_rate);
  AdamState psi_opt = AdamState::make(enc.psi.n_params(), cfg.learning_rate);
  Rng rng(cfg.seed);
  const double log_km1 = std::log(static_cast<double>(cfg.negatives_per_positive));

  for (int step = 1; step <= cfg.update_count; ++step) {
    const NceBatch batch =
        assemble_batch(d_src, d_tar, cfg.batch_size, cfg.negatives_per_positive, rng);
    MlpGrads phi_g = MlpGrads::zeros_like(enc.phi);
    MlpGrads psi_g = MlpGrads::zeros_like(enc.psi);
    const double loss = nce_loss(enc, batch, &phi_g, &psi_g);
    adam_step_mlp(phi_opt, enc.phi, phi_g);
    adam_step_mlp(psi_opt, enc.psi, psi_g);
    if (metrics) metrics->push_back({step, loss, log_km1 - loss});
  }
  return enc;
}

InfoNceEstimate estimate_i_nce(const Encoder& enc, const Dataset& d_src, const Dataset& d_tar,
                               int k, int n_eval_batches, int batch_size, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("estimate_i_nce: k must be >= 2");
  if (n_eval_batches < 1 || batch_size < 1)
    throw std::invalid_argument("estimate_i_nce: counts must be positive");
  Rng rng(seed);
  const double log_km1 = std::log(static_cast<double>(k - 1));
  double sum = 0.0, sum_sq = 0.0;
  long n = 0;
  for (int bidx = 0; bidx < n_eval_batches; ++bidx) {
    const NceBatch batch = assemble_batch(d_src, d_tar, batch_size, k - 1, rng);
    // Per-positive losses for the standard error.
    const int b = batch_size;
    Matrix phi_in(b, phi_input_dim(enc));
    Matrix psi_in(b * k, psi_input_dim(enc));
    for (int i = 0; i < b; ++i) {
      encode_state_action(enc, batch.positives[i], phi_in.row(i));
      encode_next_state(enc, batch.positives[i], psi_in.row(i * k));
      for (int j = 0; j < k - 1; ++j)
        encode_next_state(enc, batch.negatives[i][j], psi_in.row(i * k + 1 + j));
    }
    const Matrix phi = normalize_sphere(mlp_forward(enc.phi, phi_in));
    const Matrix psi = normalize_sphere(mlp_forward(enc.psi, psi_in));
    for (int i = 0; i < b; ++i) {
      double mx = -1e300;
      std::vector<double> logit(k);
      for (int j = 0; j < k; ++j) {
        double acc = 0.0;
        for (int c = 0; c < enc.d; ++c) acc += phi(i, c) * psi(i * k + j, c);
        logit[j] = acc;
        mx = std::max(mx, acc);
      }
      double z = 0.0;
      for (int j = 0; j < k; ++j) z += std::exp(logit[j] - mx);
      const double loss_i = mx + std::log(z) - logit[0];
      sum += loss_i;
      sum_sq += loss_i * loss_i;
      ++n;
    }
  }
  const double mean_loss = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean_loss * mean_loss);
  InfoNceEstimate est;
  est.mean = log_km1 - mean_loss;
  est.std_error = std::sqrt(var / n);
  return est;
}

void save_encoder(std::ostream& os, const Encoder& enc, std::uint64_t seed) {
  os << "igdf-encoder v1; kind=" << to_string(enc.kind) << "; d=" << enc.d
     << "; n_states=" << enc.n_states << "; n_actions=" << enc.n_actions
     << "; sdim=" << enc.state_dim << "; adim=" << enc.action_dim << "\n";
  save_net(os, enc.phi, seed);
  save_net(os, enc.psi, seed);
}

void save_encoder_file(const std::string& path, const Encoder& enc, std::uint64_t seed) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_encoder_file: cannot open " + path);
  save_encoder(f, enc, seed);
}

std::string encoder_to_string(const Encoder& enc, std::uint64_t seed) {
  std::ostringstream os;
  save_encoder(os, enc, seed);
  return os.str();
}

namespace {
std::string enc_header_value(const std::string& header, const std::string& key) {
  // Anchored on the field separator so e.g. "d=" never matches inside
  // "kind=".
  const std::string needle = "; " + key + "=";
  std::size_t pos = header.find(needle);
  if (pos == std::string::npos) throw std::runtime_error("load_encoder: missing " + key);
  pos += needle.size();
  std::size_t end = header.find(';', pos);
  if (end == std::string::npos) end = header.size();
  return header.substr(pos, end - pos);
}
}  // namespace

Encoder load_encoder(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("load_encoder: missing header");
  if (header.rfind("igdf-encoder v1;", 0) != 0)
    throw std::runtime_error("load_encoder: bad header: " + header);
  Encoder enc;
  enc.kind = kind_from_string(enc_header_value(header, "kind"));
  enc.encoding = enc.kind == Kind::tabular ? StateEncoding::one_hot : StateEncoding::raw_vector;
  enc.d = std::stoi(enc_header_value(header, "d"));
  enc.n_states = std::stoi(enc_header_value(header, "n_states"));
  enc.n_actions = std::stoi(enc_header_value(header, "n_actions"));
  enc.state_dim = std::stoi(enc_header_value(header, "sdim"));
  enc.action_dim = std::stoi(enc_header_value(header, "adim"));
  enc.phi = load_net(is);
  enc.psi = load_net(is);
  return enc;
}

Encoder load_encoder_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_encoder_file: cannot open " + path);
  return load_encoder(f);
}

}  // namespace igdf
