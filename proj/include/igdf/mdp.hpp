#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "igdf/rng.hpp"

namespace igdf {

enum class Domain { source, target };
enum class Kind { tabular, continuous };

std::string to_string(Domain d);
std::string to_string(Kind k);
Domain domain_from_string(const std::string& s);
Kind kind_from_string(const std::string& s);

// One unit of offline experience. Tabular transitions use the id fields;
// continuous transitions use the vector fields. The container's Kind says
// which is active.
struct Transition {
  int s = -1;
  int a = -1;
  int s_next = -1;
  std::vector<double> sv;
  std::vector<double> av;
  std::vector<double> sv_next;
  double reward = 0.0;
  bool terminal = false;
};

struct Dataset {
  Kind kind = Kind::tabular;
  Domain domain = Domain::source;
  std::string env_id;
  std::string behavior_id;
  std::uint64_t seed = 0;
  int state_dim = 0;   // continuous kind only
  int action_dim = 0;  // continuous kind only
  std::vector<Transition> transitions;
};

struct TabularPolicy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // [s * n_actions + a]

  double p(int s, int a) const { return probs[static_cast<std::size_t>(s) * n_actions + a]; }
  double& pref(int s, int a) { return probs[static_cast<std::size_t>(s) * n_actions + a]; }
  void validate() const;

  static TabularPolicy uniform(int n_states, int n_actions);
};

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;  // [s][a][s'] row-major
  std::vector<double> reward;      // [s][a]
  double discount = 0.99;
  std::vector<double> initial_dist;

  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double& pref(int s, int a, int s2) {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
  double& rref(int s, int a) { return reward[static_cast<std::size_t>(s) * n_actions + a]; }

  void validate() const;
};

// Count-estimated dynamics. p_hat rows are normalized counts on visited
// (s,a) and all-zero elsewhere; rho_hat_next is the raw empirical next-state
// frequency of the dataset.
struct EmpiricalMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<long long> counts;      // [s][a][s']
  std::vector<double> p_hat;          // [s][a][s']
  std::vector<double> rho_hat_next;   // [s']
  std::vector<char> support_mask;     // [s][a]

  long long count(int s, int a, int s2) const {
    return counts[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  double p(int s, int a, int s2) const {
    return p_hat[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
  }
  bool supported(int s, int a) const {
    return support_mask[static_cast<std::size_t>(s) * n_actions + a] != 0;
  }
};

// Roll out the behavior policy, restarting from initial_dist at the horizon.
// Deterministic in (mdp, policy, seed).
Dataset sample_dataset(const TabularMDP& mdp, const TabularPolicy& policy, int n_transitions,
                       int horizon, std::uint64_t seed, Domain domain = Domain::source,
                       const std::string& env_id = "tabular", const std::string& behavior_id = "");

// Maximum-likelihood count estimate. Dimensions are inferred from the data
// when not given; pass them explicitly to put paired datasets on one space.
EmpiricalMDP estimate_empirical(const Dataset& dataset, int n_states = -1, int n_actions = -1);

// Normalized discounted state occupancy of the policy. The series starts at
// t = 0 with weight (1 - discount) so the output sums to one exactly.
std::vector<double> discounted_visitation(const TabularMDP& mdp, const TabularPolicy& policy);

// V_pi from the policy-evaluation linear solve.
std::vector<double> policy_values(const TabularMDP& mdp, const TabularPolicy& policy);

// Exact discounted return: initial_dist . V_pi.
double policy_return(const TabularMDP& mdp, const TabularPolicy& policy);

// Optimal action values by value iteration, run to the given sup-norm gap.
std::vector<double> optimal_q(const TabularMDP& mdp, double tol = 1e-12);

TabularPolicy greedy_policy_from_q(const TabularMDP& mdp, const std::vector<double>& q);

// Canonical text serialization; the format is the test contract.
void save_dataset(std::ostream& os, const Dataset& d);
void save_dataset_file(const std::string& path, const Dataset& d);
std::string dataset_to_string(const Dataset& d);
Dataset load_dataset(std::istream& is);
Dataset load_dataset_file(const std::string& path);

}  // namespace igdf
