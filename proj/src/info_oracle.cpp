#include "igdf/info_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace igdf {

std::string ExtReal::str() const {
  switch (tag) {
    case Tag::pos_inf: return "inf";
    case Tag::neg_inf: return "-inf";
    case Tag::finite: {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", value);
      return buf;
    }
  }
  return "?";
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

ExtReal kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return ExtReal::pos_inf();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return ExtReal::finite(kl);
}

namespace {

// Joint sampler frequencies w[s][a][s'], exact over the dataset.
std::vector<double> sampler_weights(const EmpiricalMDP& ref, const Dataset& sampler) {
  if (sampler.kind != Kind::tabular)
    throw std::invalid_argument("info_oracle: sampler must be tabular");
  if (sampler.transitions.empty()) throw std::invalid_argument("info_oracle: empty sampler");
  std::vector<double> w(static_cast<std::size_t>(ref.n_states) * ref.n_actions * ref.n_states, 0.0);
  const double inv = 1.0 / static_cast<double>(sampler.transitions.size());
  for (const auto& t : sampler.transitions) {
    if (t.s < 0 || t.s >= ref.n_states || t.a < 0 || t.a >= ref.n_actions || t.s_next < 0 ||
        t.s_next >= ref.n_states)
      throw std::invalid_argument("info_oracle: sampler tuple out of range");
    w[(static_cast<std::size_t>(t.s) * ref.n_actions + t.a) * ref.n_states + t.s_next] += inv;
  }
  return w;
}

std::vector<double> conditional_row(const EmpiricalMDP& emp, int s, int a) {
  std::vector<double> row(emp.n_states);
  for (int s2 = 0; s2 < emp.n_states; ++s2) row[s2] = emp.p(s, a, s2);
  return row;
}

}  // namespace

ExtReal exact_mi(const EmpiricalMDP& emp, const Dataset& sampler,
                 std::vector<SupportViolation>* violations) {
  const std::vector<double> w = sampler_weights(emp, sampler);
  double acc = 0.0;
  bool violated = false;
  for (int s = 0; s < emp.n_states; ++s)
    for (int a = 0; a < emp.n_actions; ++a)
      for (int s2 = 0; s2 < emp.n_states; ++s2) {
        const double wi = w[(static_cast<std::size_t>(s) * emp.n_actions + a) * emp.n_states + s2];
        if (wi == 0.0) continue;
        const double p = emp.p(s, a, s2);
        if (p <= 0.0) {
          violated = true;
          if (violations) violations->push_back({s, a, s2});
          continue;
        }
        acc += wi * std::log(p / emp.rho_hat_next[s2]);
      }
  if (violated) return ExtReal::neg_inf();
  return ExtReal::finite(acc);
}

MiGapReport decompose_theorem2(const EmpiricalMDP& src_emp, const EmpiricalMDP& tar_emp,
                               const Dataset& sampler, Domain data_domain) {
  if (src_emp.n_states != tar_emp.n_states || src_emp.n_actions != tar_emp.n_actions)
    throw std::invalid_argument("mi_gap: empirical MDPs over different spaces");

  MiGapReport rep;
  rep.data_domain = data_domain;
  rep.i_tar = exact_mi(tar_emp, sampler, &rep.violations);
  rep.i_src = exact_mi(src_emp, sampler, &rep.violations);
  if (rep.i_tar.is_finite() && rep.i_src.is_finite())
    rep.delta_i = ExtReal::finite(rep.i_tar.value - rep.i_src.value);
  else if (!rep.i_tar.is_finite() && rep.i_src.is_finite())
    rep.delta_i = ExtReal::neg_inf();
  else if (rep.i_tar.is_finite() && !rep.i_src.is_finite())
    rep.delta_i = ExtReal::pos_inf();
  else
    rep.delta_i = ExtReal::finite(0.0);  // both -inf: gap undefined, report 0 with violations

  rep.h_rho_src = entropy(src_emp.rho_hat_next);
  rep.h_rho_tar = entropy(tar_emp.rho_hat_next);

  const EmpiricalMDP& data_emp = (data_domain == Domain::source) ? src_emp : tar_emp;
  const EmpiricalMDP& other_emp = (data_domain == Domain::source) ? tar_emp : src_emp;
  rep.kl_state = kl_divergence(data_emp.rho_hat_next, other_emp.rho_hat_next);

  // E_{(s,a) ~ sampler} D_KL[P_data(.|s,a) || P_other(.|s,a)].
  const std::vector<double> w = sampler_weights(src_emp, sampler);
  double kl_dyn = 0.0;
  bool dyn_inf = false;
  for (int s = 0; s < src_emp.n_states && !dyn_inf; ++s)
    for (int a = 0; a < src_emp.n_actions && !dyn_inf; ++a) {
      double wsa = 0.0;
      const std::size_t base = (static_cast<std::size_t>(s) * src_emp.n_actions + a) *
                               static_cast<std::size_t>(src_emp.n_states);
      for (int s2 = 0; s2 < src_emp.n_states; ++s2) wsa += w[base + s2];
      if (wsa == 0.0) continue;
      const ExtReal kl =
          kl_divergence(conditional_row(data_emp, s, a), conditional_row(other_emp, s, a));
      if (!kl.is_finite()) {
        dyn_inf = true;
        break;
      }
      kl_dyn += wsa * kl.value;
    }
  rep.kl_dynamics = dyn_inf ? ExtReal::pos_inf() : ExtReal::finite(kl_dyn);
  return rep;
}

MiGapReport mi_gap(const EmpiricalMDP& src_emp, const EmpiricalMDP& tar_emp,
                   const Dataset& sampler, Domain data_domain) {
  return decompose_theorem2(src_emp, tar_emp, sampler, data_domain);
}

ExtReal decomposition_rhs(const MiGapReport& report) {
  if (!report.kl_state.is_finite() || !report.kl_dynamics.is_finite()) {
    // source: kl_state - kl_dynamics; target: kl_dynamics - kl_state
    const bool pos_first = report.data_domain == Domain::target;
    const ExtReal& lead = pos_first ? report.kl_dynamics : report.kl_state;
    const ExtReal& sub = pos_first ? report.kl_state : report.kl_dynamics;
    if (!lead.is_finite() && sub.is_finite()) return lead;
    if (lead.is_finite() && !sub.is_finite())
      return sub.tag == ExtReal::Tag::pos_inf ? ExtReal::neg_inf() : ExtReal::pos_inf();
    return ExtReal::finite(0.0);
  }
  const double v = (report.data_domain == Domain::source)
                       ? report.kl_state.value - report.kl_dynamics.value
                       : report.kl_dynamics.value - report.kl_state.value;
  return ExtReal::finite(v);
}

ExtReal performance_bound_rhs(const TabularMDP& true_tar, const EmpiricalMDP& tar_emp,
                              const EmpiricalMDP& src_emp, const TabularPolicy& policy,
                              double r_max, const MiGapReport& report) {
  (void)src_emp;
  policy.validate();
  if (report.data_domain != Domain::source)
    throw std::invalid_argument("performance_bound_rhs: report must use source-domain data");
  if (!report.kl_state.is_finite() || !report.delta_i.is_finite()) return ExtReal::neg_inf();

  // E over the target dataset's (s,a) frequencies of the TV error.
  long long total = 0;
  double e_tv = 0.0;
  for (int s = 0; s < tar_emp.n_states; ++s)
    for (int a = 0; a < tar_emp.n_actions; ++a) {
      long long csa = 0;
      for (int s2 = 0; s2 < tar_emp.n_states; ++s2) csa += tar_emp.count(s, a, s2);
      if (csa == 0) continue;
      double tv = 0.0;
      for (int s2 = 0; s2 < tar_emp.n_states; ++s2)
        tv += std::abs(true_tar.p(s, a, s2) - tar_emp.p(s, a, s2));
      e_tv += static_cast<double>(csa) * 0.5 * tv;
      total += csa;
    }
  if (total > 0) e_tv /= static_cast<double>(total);

  const double gamma = true_tar.discount;
  const double pref = gamma * r_max / ((1.0 - gamma) * (1.0 - gamma));
  const double braces =
      2.0 * e_tv + std::sqrt(2.0 * report.kl_state.value + 2.0 * std::abs(report.delta_i.value));
  return ExtReal::finite(-pref * braces);
}

TabularMDP empirical_to_mdp(const EmpiricalMDP& emp, const std::vector<double>& reward,
                            double discount, const std::vector<double>& initial_dist) {
  TabularMDP m;
  m.n_states = emp.n_states;
  m.n_actions = emp.n_actions;
  m.discount = discount;
  m.transition = emp.p_hat;
  m.reward = reward;
  m.initial_dist = initial_dist;
  for (int s = 0; s < emp.n_states; ++s)
    for (int a = 0; a < emp.n_actions; ++a)
      if (!emp.supported(s, a))
        throw std::invalid_argument("empirical_to_mdp: unsupported (s,a) row");
  m.validate();
  return m;
}

InfoNceEstimate exact_infonce(const ScoreFn& score_pos, const ScoreFn& score_neg,
                              const EmpiricalMDP& tar_emp, const EmpiricalMDP& src_emp, int k,
                              int n_draws, Rng& rng) {
  if (k < 2) throw std::invalid_argument("exact_infonce: k must be >= 2");
  if (n_draws < 1) throw std::invalid_argument("exact_infonce: n_draws must be >= 1");

  // Cumulative distribution over positive tuples from the target joint.
  struct Tuple { int s, a, s2; };
  std::vector<Tuple> pos;
  std::vector<double> pos_cdf;
  {
    long long total = 0;
    for (long long c : tar_emp.counts) total += c;
    if (total == 0) throw std::invalid_argument("exact_infonce: empty target empirical");
    double acc = 0.0;
    for (int s = 0; s < tar_emp.n_states; ++s)
      for (int a = 0; a < tar_emp.n_actions; ++a)
        for (int s2 = 0; s2 < tar_emp.n_states; ++s2) {
          const long long c = tar_emp.count(s, a, s2);
          if (c == 0) continue;
          acc += static_cast<double>(c) / static_cast<double>(total);
          pos.push_back({s, a, s2});
          pos_cdf.push_back(acc);
        }
  }
  std::vector<double> neg_cdf(src_emp.n_states);
  {
    double acc = 0.0;
    for (int s2 = 0; s2 < src_emp.n_states; ++s2) {
      acc += src_emp.rho_hat_next[s2];
      neg_cdf[s2] = acc;
    }
  }
  auto draw = [&rng](const std::vector<double>& cdf) {
    const double u = rng.uniform();
    return static_cast<int>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  };

  double sum = 0.0, sum_sq = 0.0;
  for (int m = 0; m < n_draws; ++m) {
    const int pi = std::min<int>(draw(pos_cdf), static_cast<int>(pos.size()) - 1);
    const Tuple& t = pos[pi];
    const double h_pos = score_pos(t.s, t.a, t.s2);
    double denom = h_pos;
    for (int j = 0; j < k - 1; ++j) {
      const int s2 = std::min(draw(neg_cdf), src_emp.n_states - 1);
      denom += score_neg(t.s, t.a, s2);
    }
    const double loss = std::log(denom) - std::log(h_pos);
    sum += loss;
    sum_sq += loss * loss;
  }
  const double mean_loss = sum / n_draws;
  InfoNceEstimate est;
  est.mean = std::log(static_cast<double>(k - 1)) - mean_loss;
  const double var = std::max(0.0, sum_sq / n_draws - mean_loss * mean_loss);
  est.std_error = std::sqrt(var / n_draws);
  return est;
}

InfoNceEstimate exact_infonce(const ScoreFn& score, const EmpiricalMDP& tar_emp,
                              const EmpiricalMDP& src_emp, int k, int n_draws, Rng& rng) {
  return exact_infonce(score, score, tar_emp, src_emp, k, n_draws, rng);
}

ExtReal dynamics_ratio_exact(const EmpiricalMDP& src_emp, const EmpiricalMDP& tar_emp,
                             const Dataset& sampler, std::vector<SupportViolation>* violations) {
  const std::vector<double> w = sampler_weights(src_emp, sampler);
  double acc = 0.0;
  bool tar_zero = false, src_zero = false;
  for (int s = 0; s < src_emp.n_states; ++s)
    for (int a = 0; a < src_emp.n_actions; ++a)
      for (int s2 = 0; s2 < src_emp.n_states; ++s2) {
        const double wi =
            w[(static_cast<std::size_t>(s) * src_emp.n_actions + a) * src_emp.n_states + s2];
        if (wi == 0.0) continue;
        const double pt = tar_emp.p(s, a, s2);
        const double ps = src_emp.p(s, a, s2);
        if (pt <= 0.0) {
          tar_zero = true;
          if (violations) violations->push_back({s, a, s2});
          continue;
        }
        if (ps <= 0.0) {
          src_zero = true;
          continue;
        }
        acc += wi * std::log(pt / ps);
      }
  if (tar_zero) return ExtReal::neg_inf();
  if (src_zero) return ExtReal::pos_inf();
  return ExtReal::finite(acc);
}

}  // namespace igdf
