#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "igdf/mdp.hpp"
#include "igdf/rng.hpp"

namespace igdf {

enum class Quality { medium, medium_replay_mix, expert_mix };

std::string to_string(Quality q);
Quality quality_from_string(const std::string& s);

// Source/target gridworld pair differing only in the slip probability.
// Actions: 0=up 1=down 2=left 3=right; the intended direction succeeds with
// probability 1-slip, otherwise one of the other three directions is taken
// uniformly. Moves into walls stay put. The goal cell is absorbing.
struct GridworldShiftSpec {
  int width = 5;
  int height = 5;
  double slip_source = 0.1;
  double slip_target = 0.1;
  int goal_x = 4;
  int goal_y = 4;
  double step_reward = -1.0;
  double goal_reward = 0.0;
  double discount = 0.95;

  int n_states() const { return width * height; }
  int state_id(int x, int y) const { return y * width + x; }
  void validate() const;
};

std::pair<TabularMDP, TabularMDP> make_gridworld_pair(const GridworldShiftSpec& spec);

// Large-gap family: in the source domain one action is replaced by a no-op,
// so the source reaches (s, a, s) tuples the target dynamics never produces.
std::pair<TabularMDP, TabularMDP> make_gridworld_broken_pair(const GridworldShiftSpec& spec,
                                                             int broken_action = 3);

struct PointMassShiftSpec {
  double dt = 0.1;
  double mass_source = 1.0;
  double mass_target = 1.0;
  double friction_source = 0.1;
  double friction_target = 0.1;
  double action_noise_source = 0.0;
  double action_noise_target = 0.0;
  int horizon = 40;
  double goal_x = 0.0;
  double goal_y = 0.0;

  void validate() const;
};

// 2D point mass: state (x, y, vx, vy), action a force in [-1,1]^2.
// v' = (1-friction) v + (a/mass) dt, x' = x + v' dt, reward -||x'-goal||.
struct ContinuousEnv {
  int state_dim = 4;
  int action_dim = 2;
  int horizon = 40;
  std::function<std::vector<double>(Rng&)> reset;
  // step(s, a, rng) -> (s', reward); terminal handling is time-based and
  // owned by the rollout loop.
  std::function<std::pair<std::vector<double>, double>(std::span<const double>,
                                                       std::span<const double>, Rng&)> step;
};

std::pair<ContinuousEnv, ContinuousEnv> make_pointmass_pair(const PointMassShiftSpec& spec);

// Tabular behavior: epsilon-greedy over the exact optimal Q with a
// quality-dependent epsilon (medium 0.3, expert_mix 0.05,
// medium_replay_mix = half uniform, half the medium policy).
TabularPolicy make_behavior_policy(const TabularMDP& mdp, Quality quality, std::uint64_t seed);

// Continuous behavior: noisy proportional-derivative controller toward the
// goal; the noise scale depends on quality.
struct PdController {
  double kp = 1.0;
  double kd = 0.6;
  double noise = 0.3;
  double goal_x = 0.0;
  double goal_y = 0.0;

  std::vector<double> act(std::span<const double> state, Rng& rng) const;
};

PdController make_pd_controller(const PointMassShiftSpec& spec, Quality quality);

Dataset sample_continuous_dataset(const ContinuousEnv& env, const PdController& pd,
                                  int n_transitions, std::uint64_t seed, Domain domain,
                                  const std::string& env_id = "pointmass",
                                  const std::string& behavior_id = "pd");

// Expected per-(s,a) dynamics KL between two MDPs over the same space,
// weighted uniformly over state-action pairs. Diverging support counts as a
// large finite value is NOT done here: a q-zero on p-support yields +inf.
double expected_dynamics_kl(const TabularMDP& a, const TabularMDP& b);

}  // namespace igdf
