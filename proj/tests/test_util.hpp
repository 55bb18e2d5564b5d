#pragma once

#include <vector>

#include "igdf/mdp.hpp"
#include "igdf/rng.hpp"

namespace igdf::test {

// Random full-support tabular MDP; every transition row and the initial
// distribution get a probability floor so linear solves stay well-posed.
inline TabularMDP random_mdp(int n_states, int n_actions, double discount, Rng& rng) {
  TabularMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.discount = discount;
  m.transition.assign(static_cast<std::size_t>(n_states) * n_actions * n_states, 0.0);
  m.reward.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  m.initial_dist.assign(n_states, 0.0);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double v = 0.05 + rng.uniform();
        m.pref(s, a, s2) = v;
        total += v;
      }
      for (int s2 = 0; s2 < n_states; ++s2) m.pref(s, a, s2) /= total;
      m.rref(s, a) = rng.uniform(-1.0, 1.0);
    }
  double total = 0.0;
  for (int s = 0; s < n_states; ++s) {
    m.initial_dist[s] = 0.05 + rng.uniform();
    total += m.initial_dist[s];
  }
  for (int s = 0; s < n_states; ++s) m.initial_dist[s] /= total;
  m.validate();
  return m;
}

inline TabularPolicy random_policy(int n_states, int n_actions, Rng& rng) {
  TabularPolicy p;
  p.n_states = n_states;
  p.n_actions = n_actions;
  p.probs.assign(static_cast<std::size_t>(n_states) * n_actions, 0.0);
  for (int s = 0; s < n_states; ++s) {
    double total = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      p.pref(s, a) = 0.05 + rng.uniform();
      total += p.pref(s, a);
    }
    for (int a = 0; a < n_actions; ++a) p.pref(s, a) /= total;
  }
  p.validate();
  return p;
}

// Random full-support empirical MDP from integer counts in [1, hi], plus a
// dataset that replays each tuple count-many times so dataset expectations
// match count-weighted sums exactly.
inline std::pair<EmpiricalMDP, Dataset> random_empirical(int n_states, int n_actions, int hi,
                                                         Rng& rng, Domain domain) {
  Dataset d;
  d.kind = Kind::tabular;
  d.domain = domain;
  d.env_id = "random";
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      for (int s2 = 0; s2 < n_states; ++s2) {
        const int c = 1 + rng.index(hi);
        for (int i = 0; i < c; ++i) {
          Transition t;
          t.s = s;
          t.a = a;
          t.s_next = s2;
          d.transitions.push_back(t);
        }
      }
  return {estimate_empirical(d, n_states, n_actions), d};
}

}  // namespace igdf::test
