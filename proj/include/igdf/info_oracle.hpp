#pragma once

#include <functional>
#include <string>
#include <vector>

#include "igdf/mdp.hpp"
#include "igdf/rng.hpp"

namespace igdf {

// Extended real with explicit infinity tags; serialization never emits IEEE
// infinities or NaNs.
struct ExtReal {
  enum class Tag { finite, pos_inf, neg_inf };
  double value = 0.0;
  Tag tag = Tag::finite;

  static ExtReal finite(double v) { return {v, Tag::finite}; }
  static ExtReal pos_inf() { return {0.0, Tag::pos_inf}; }
  static ExtReal neg_inf() { return {0.0, Tag::neg_inf}; }
  bool is_finite() const { return tag == Tag::finite; }
  std::string str() const;
};

struct SupportViolation {
  int s = -1;
  int a = -1;
  int s_next = -1;
};

struct MiGapReport {
  ExtReal i_tar;
  ExtReal i_src;
  ExtReal delta_i;
  ExtReal kl_state;     // D_KL between next-state marginals
  ExtReal kl_dynamics;  // sampler-expected D_KL between conditionals
  double h_rho_src = 0.0;
  double h_rho_tar = 0.0;
  Domain data_domain = Domain::source;
  std::vector<SupportViolation> violations;
};

// Shannon entropy of a probability vector in nats; 0 log 0 = 0.
double entropy(const std::vector<double>& p);

// D_KL(p || q); +inf when q = 0 on p > 0 support.
ExtReal kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Dataset expectation of log(p_hat(s'|s,a) / rho_hat_next(s')) under the
// supplied empirical MDP. Exact over dataset frequency weights. Returns -inf
// with a violation list when a sampled tuple lies outside emp's support.
ExtReal exact_mi(const EmpiricalMDP& emp, const Dataset& sampler,
                 std::vector<SupportViolation>* violations = nullptr);

// MI gap: exact_mi(tar) - exact_mi(src) on a common sampler, with the
// state/dynamics KL decomposition filled in for the stated data domain.
MiGapReport mi_gap(const EmpiricalMDP& src_emp, const EmpiricalMDP& tar_emp,
                   const Dataset& sampler, Domain data_domain);

// Same as mi_gap; name kept for the identity-check role. delta_i comes from
// the two MI terms independently, the KL fields from direct enumeration, so
// comparing them is a genuine cross-check of the decomposition.
MiGapReport decompose_theorem2(const EmpiricalMDP& src_emp, const EmpiricalMDP& tar_emp,
                               const Dataset& sampler, Domain data_domain);

// The identity's right-hand side: kl_state - kl_dynamics for source-domain
// data and kl_dynamics - kl_state for target-domain data.
ExtReal decomposition_rhs(const MiGapReport& report);

// Lower bound on eta_{M_tar}(pi) - eta_{Mhat_src}(pi):
// -(gamma R_max/(1-gamma)^2) { 2 E_{rho_tar}[D_TV(P_tar || P_hat_tar)]
//                              + sqrt(2 kl_state + 2 |delta_i|) }.
ExtReal performance_bound_rhs(const TabularMDP& true_tar, const EmpiricalMDP& tar_emp,
                              const EmpiricalMDP& src_emp, const TabularPolicy& policy,
                              double r_max, const MiGapReport& report);

// Build a TabularMDP from an empirical transition tensor (rows must all be
// supported); used to evaluate returns on empirical MDPs.
TabularMDP empirical_to_mdp(const EmpiricalMDP& emp, const std::vector<double>& reward,
                            double discount, const std::vector<double>& initial_dist);

using ScoreFn = std::function<double(int s, int a, int s_next)>;

struct InfoNceEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Brute-force contrastive bound estimate log(K-1) - L: positives drawn from
// the target empirical joint, K-1 i.i.d. negatives from rho_hat_src, Monte
// Carlo over draws. score_pos scores the positive candidate, score_neg the
// negatives (pass the same callable for the single-score objective).
InfoNceEstimate exact_infonce(const ScoreFn& score_pos, const ScoreFn& score_neg,
                              const EmpiricalMDP& tar_emp, const EmpiricalMDP& src_emp, int k,
                              int n_draws, Rng& rng);

InfoNceEstimate exact_infonce(const ScoreFn& score, const EmpiricalMDP& tar_emp,
                              const EmpiricalMDP& src_emp, int k, int n_draws, Rng& rng);

// Delta P = E_sampler[log p_tar / p_src]; -inf sentinel when a sampled tuple
// has zero target probability (the unbounded case).
ExtReal dynamics_ratio_exact(const EmpiricalMDP& src_emp, const EmpiricalMDP& tar_emp,
                             const Dataset& sampler,
                             std::vector<SupportViolation>* violations = nullptr);

}  // namespace igdf
