#pragma once

#include <cstdint>
#include <vector>

#include "igdf/contrastive.hpp"
#include "igdf/mdp.hpp"

namespace igdf {

struct FilterConfig {
  double xi = 0.25;      // selection ratio in (0, 1]
  double alpha = 1.0;    // importance coefficient, >= 0
  int batch_size = 256;  // combined batch B, even

  void validate() const;
  // Source batch drawn per update: ceil(B / (2 xi)); kept count = B / 2.
  int source_batch_size() const;
};

struct FilteredBatch {
  std::vector<Transition> kept;
  std::vector<double> kept_scores;
  std::vector<bool> omega;   // mask over the raw batch
  double threshold = 0.0;    // score of the lowest kept sample
};

// Keeps the ceil(xi * n) highest-scoring transitions; stable tie-break by
// lower original index. threshold is the lowest kept score.
FilteredBatch rank_and_filter(const Encoder& enc, const std::vector<Transition>& raw_src_batch,
                              double xi);

// Per-kept-sample TD weights: alpha * h_i, except alpha = 0 which means
// uniform weight 1 on kept samples (the equal-importance degenerate case).
std::vector<double> td_weights(const FilteredBatch& batch, double alpha);

// Dynamics-ratio reward correction learned from a pair of domain classifiers
// q(tar | s, a, s') and q(tar | s, a). delta_r is clipped to [-10, 10];
// delta_r_raw is the unclipped value.
struct DaraModel {
  Mlp sas;  // (s, a, s') -> 2 logits [src, tar]
  Mlp sa;   // (s, a)     -> 2 logits [src, tar]
  Encoder layout;  // reused for input encodings only

  double delta_r_raw(const Transition& t) const;
  double delta_r(const Transition& t) const;
};

struct DaraConfig {
  double learning_rate = 3e-4;
  int batch_size = 128;
  int update_count = 3000;
  int hidden = 256;
  std::uint64_t seed = 0;
};

// Cross-entropy loss of a 2-way softmax classifier over a batch; labels are
// 0 = source, 1 = target. Fills grads when requested.
double classifier_loss(const Mlp& net, const Matrix& inputs, const std::vector<int>& labels,
                       MlpGrads* grads);

DaraModel dara_baseline_train(const DaraConfig& cfg, const Dataset& d_src, const Dataset& d_tar);

}  // namespace igdf
