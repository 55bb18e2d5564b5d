#include <cmath>

#include "doctest.h"
#include "igdf/envs.hpp"
#include "igdf/mdp.hpp"

using namespace igdf;

TEST_CASE("equal slip probabilities give identical transition tensors") {
  GridworldShiftSpec spec;
  spec.slip_source = 0.2;
  spec.slip_target = 0.2;
  auto [src, tar] = make_gridworld_pair(spec);
  CHECK(src.transition == tar.transition);
  CHECK(src.reward == tar.reward);
}

TEST_CASE("zero slip makes every transition row one-hot") {
  GridworldShiftSpec spec;
  spec.slip_source = 0.0;
  auto [src, tar] = make_gridworld_pair(spec);
  for (int s = 0; s < src.n_states; ++s)
    for (int a = 0; a < src.n_actions; ++a) {
      int ones = 0;
      for (int s2 = 0; s2 < src.n_states; ++s2) {
        CHECK((src.p(s, a, s2) == 0.0 || src.p(s, a, s2) == 1.0));
        if (src.p(s, a, s2) == 1.0) ++ones;
      }
      CHECK(ones == 1);
    }
}

TEST_CASE("paired gridworlds share rewards and spaces across shift families") {
  GridworldShiftSpec spec;
  spec.slip_source = 0.3;
  spec.slip_target = 0.05;
  auto [src, tar] = make_gridworld_pair(spec);
  CHECK(src.reward == tar.reward);
  CHECK(src.n_states == tar.n_states);
  CHECK(src.initial_dist == tar.initial_dist);
  auto [bsrc, btar] = make_gridworld_broken_pair(spec, 3);
  CHECK(bsrc.reward == btar.reward);
  // The broken action is a no-op in the source only.
  bool differs = false;
  for (int s = 0; s < bsrc.n_states && !differs; ++s)
    for (int s2 = 0; s2 < bsrc.n_states; ++s2)
      if (bsrc.p(s, 3, s2) != btar.p(s, 3, s2)) {
        differs = true;
        break;
      }
  CHECK(differs);
}

TEST_CASE("broken source action holds the agent in place") {
  GridworldShiftSpec spec;
  spec.slip_source = 0.0;
  spec.slip_target = 0.0;
  auto [src, tar] = make_gridworld_broken_pair(spec, 2);
  const int s = spec.state_id(2, 2);
  CHECK(src.p(s, 2, s) == 1.0);
  CHECK(tar.p(s, 2, s) == 0.0);
}

TEST_CASE("dynamics gap grows with the slip difference") {
  double prev = -1.0;
  for (double slip : {0.0, 0.1, 0.2, 0.3, 0.4}) {
    GridworldShiftSpec spec;
    spec.slip_source = slip;
    spec.slip_target = 0.0;
    auto [src, tar] = make_gridworld_pair(spec);
    const double kl = expected_dynamics_kl(src, tar);
    CHECK(kl >= prev - 1e-12);
    prev = kl;
  }
}

TEST_CASE("identical point-mass specs step identically") {
  PointMassShiftSpec spec;
  auto [src, tar] = make_pointmass_pair(spec);
  Rng r1(5), r2(5);
  const std::vector<double> s0 = {0.3, -0.2, 0.1, 0.05};
  const std::vector<double> a = {0.4, -0.7};
  auto [s1, rew1] = src.step(s0, a, r1);
  auto [s2, rew2] = tar.step(s0, a, r2);
  CHECK(s1 == s2);
  CHECK(rew1 == rew2);
}

TEST_CASE("frictionless drift advances position by v dt") {
  PointMassShiftSpec spec;
  spec.friction_source = 0.0;
  spec.dt = 0.1;
  auto [src, tar] = make_pointmass_pair(spec);
  Rng rng(0);
  const std::vector<double> s0 = {0.0, 0.0, 1.0, 0.0};
  const std::vector<double> a = {0.0, 0.0};
  auto [s1, rew] = src.step(s0, a, rng);
  CHECK(s1[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s1[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s1[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("doubling the mass halves the velocity increment") {
  PointMassShiftSpec light;
  light.mass_source = 1.0;
  light.friction_source = 0.0;
  PointMassShiftSpec heavy = light;
  heavy.mass_source = 2.0;
  auto [src_l, tar_l] = make_pointmass_pair(light);
  auto [src_h, tar_h] = make_pointmass_pair(heavy);
  Rng r1(3), r2(3);
  const std::vector<double> s0 = {0.0, 0.0, 0.0, 0.0};
  const std::vector<double> a = {1.0, 0.0};
  auto [s_l, rew_l] = src_l.step(s0, a, r1);
  auto [s_h, rew_h] = src_h.step(s0, a, r2);
  CHECK(s_l[2] == doctest::Approx(2.0 * s_h[2]).epsilon(1e-12));
}

TEST_CASE("behavior quality orders exact policy returns") {
  GridworldShiftSpec spec;
  spec.slip_source = 0.1;
  spec.slip_target = 0.1;
  auto [mdp, tar] = make_gridworld_pair(spec);
  const TabularPolicy uniform = TabularPolicy::uniform(mdp.n_states, mdp.n_actions);
  const TabularPolicy optimal = greedy_policy_from_q(mdp, optimal_q(mdp));
  const TabularPolicy medium = make_behavior_policy(mdp, Quality::medium, 1);
  const double r_uniform = policy_return(mdp, uniform);
  const double r_optimal = policy_return(mdp, optimal);
  const double r_medium = policy_return(mdp, medium);
  CHECK(r_medium > r_uniform);
  CHECK(r_medium < r_optimal);
}

TEST_CASE("expert-quality behavior is greedy-optimal at its argmax") {
  GridworldShiftSpec spec;
  auto [mdp, tar] = make_gridworld_pair(spec);
  const TabularPolicy expert = make_behavior_policy(mdp, Quality::expert_mix, 1);
  const TabularPolicy optimal = greedy_policy_from_q(mdp, optimal_q(mdp));
  for (int s = 0; s < mdp.n_states; ++s) {
    int argmax = 0;
    for (int a = 1; a < mdp.n_actions; ++a)
      if (expert.p(s, a) > expert.p(s, argmax)) argmax = a;
    CHECK(optimal.p(s, argmax) == 1.0);
  }
}

TEST_CASE("behavior policies are deterministic per seed") {
  GridworldShiftSpec spec;
  auto [mdp, tar] = make_gridworld_pair(spec);
  const TabularPolicy a = make_behavior_policy(mdp, Quality::medium_replay_mix, 9);
  const TabularPolicy b = make_behavior_policy(mdp, Quality::medium_replay_mix, 9);
  CHECK(a.probs == b.probs);
}

TEST_CASE("continuous dataset generation is deterministic and well-formed") {
  PointMassShiftSpec spec;
  auto [src, tar] = make_pointmass_pair(spec);
  const PdController pd = make_pd_controller(spec, Quality::medium);
  const Dataset a = sample_continuous_dataset(src, pd, 300, 5, Domain::source);
  const Dataset b = sample_continuous_dataset(src, pd, 300, 5, Domain::source);
  CHECK(dataset_to_string(a) == dataset_to_string(b));
  CHECK(a.state_dim == 4);
  CHECK(a.action_dim == 2);
  for (const auto& t : a.transitions)
    for (double v : t.av) CHECK(std::abs(v) <= 1.0);
}
