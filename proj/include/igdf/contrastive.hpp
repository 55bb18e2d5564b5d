#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "igdf/info_oracle.hpp"
#include "igdf/mdp.hpp"
#include "igdf/nn.hpp"

namespace igdf {

enum class StateEncoding { one_hot, raw_vector };

// Representation pair: phi(s, a) and psi(s') on the unit sphere, so the
// score exp(phi . psi) lies in [1/e, e].
struct Encoder {
  Mlp phi;
  Mlp psi;
  int d = 16;
  Kind kind = Kind::tabular;
  StateEncoding encoding = StateEncoding::one_hot;
  int n_states = 0;   // tabular
  int n_actions = 0;  // tabular
  int state_dim = 0;  // continuous
  int action_dim = 0; // continuous
};

struct ContrastiveConfig {
  int d = 16;
  int negatives_per_positive = 127;  // K - 1
  double learning_rate = 3e-4;
  int batch_size = 128;
  int update_count = 7000;
  int hidden = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ContrastiveMetricsRow {
  int step = 0;
  double loss = 0.0;
  double i_nce = 0.0;  // log(K-1) - loss
};

Encoder make_encoder(const ContrastiveConfig& cfg, const Dataset& reference, int n_states = -1,
                     int n_actions = -1);

// phi input row for a transition's (s, a); psi input row for a state.
void encode_state_action(const Encoder& enc, const Transition& t, std::span<double> out);
void encode_next_state(const Encoder& enc, const Transition& t, std::span<double> out);
int phi_input_dim(const Encoder& enc);
int psi_input_dim(const Encoder& enc);

double score(const Encoder& enc, const Transition& t);
// Scores log h = phi . psi for a batch of transitions; h = exp of this.
std::vector<double> score_logits(const Encoder& enc, const std::vector<Transition>& batch);
std::vector<double> score_batch(const Encoder& enc, const std::vector<Transition>& batch);

// Contrastive loss over positives with per-positive negative next-states
// (indices into phi/psi layout below). Returns the loss and fills parameter
// gradients for both networks.
struct NceBatch {
  // positives[i] supplies (s, a, s'_B); negatives[i] lists K-1 next-states
  // (as Transition objects whose next-state field is read).
  std::vector<Transition> positives;
  std::vector<std::vector<Transition>> negatives;
};

double nce_loss(const Encoder& enc, const NceBatch& batch, MlpGrads* phi_grads,
                MlpGrads* psi_grads);

Encoder train_encoder(const ContrastiveConfig& cfg, const Dataset& d_src, const Dataset& d_tar,
                      std::vector<ContrastiveMetricsRow>* metrics = nullptr);

// Monte-Carlo estimate of log(K-1) - L_NCE on fresh evaluation batches.
InfoNceEstimate estimate_i_nce(const Encoder& enc, const Dataset& d_src, const Dataset& d_tar,
                               int k, int n_eval_batches, int batch_size, std::uint64_t seed);

void save_encoder(std::ostream& os, const Encoder& enc, std::uint64_t seed);
void save_encoder_file(const std::string& path, const Encoder& enc, std::uint64_t seed);
std::string encoder_to_string(const Encoder& enc, std::uint64_t seed);
Encoder load_encoder(std::istream& is);
Encoder load_encoder_file(const std::string& path);

}  // namespace igdf
