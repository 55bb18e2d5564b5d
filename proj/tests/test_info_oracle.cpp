#include <cmath>

#include "doctest.h"
#include "igdf/envs.hpp"
#include "igdf/info_oracle.hpp"
#include "test_util.hpp"

using namespace igdf;

namespace {

// Dataset listing each (s,a,s') tuple count-many times so dataset-weighted
// expectations are exact count-weighted sums.
Dataset dataset_from_counts(const EmpiricalMDP& emp, Domain domain) {
  Dataset d;
  d.kind = Kind::tabular;
  d.domain = domain;
  d.env_id = "counts";
  for (int s = 0; s < emp.n_states; ++s)
    for (int a = 0; a < emp.n_actions; ++a)
      for (int s2 = 0; s2 < emp.n_states; ++s2)
        for (long long i = 0; i < emp.count(s, a, s2); ++i) {
          Transition t;
          t.s = s;
          t.a = a;
          t.s_next = s2;
          d.transitions.push_back(t);
        }
  return d;
}

std::pair<EmpiricalMDP, Dataset> slip_pair_empiricals(double slip_src, double slip_tar,
                                                      std::uint64_t seed, EmpiricalMDP& tar_emp,
                                                      Dataset& d_tar) {
  GridworldShiftSpec spec;
  spec.slip_source = slip_src;
  spec.slip_target = slip_tar;
  auto [src, tar] = make_gridworld_pair(spec);
  const TabularPolicy b = make_behavior_policy(src, Quality::medium_replay_mix, seed);
  Dataset d_src = sample_dataset(src, b, 40000, 40, seed, Domain::source);
  d_tar = sample_dataset(tar, b, 40000, 40, seed + 1, Domain::target);
  EmpiricalMDP src_emp = estimate_empirical(d_src, src.n_states, src.n_actions);
  tar_emp = estimate_empirical(d_tar, src.n_states, src.n_actions);
  return {src_emp, d_src};
}

}  // namespace

TEST_CASE("exact_mi vanishes when next state is independent of (s, a)") {
  // Every row of the count tensor carries the same next-state profile.
  Dataset d;
  d.kind = Kind::tabular;
  const int profile[3] = {1, 2, 3};
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a)
      for (int s2 = 0; s2 < 3; ++s2)
        for (int i = 0; i < profile[s2]; ++i) {
          Transition t;
          t.s = s;
          t.a = a;
          t.s_next = s2;
          d.transitions.push_back(t);
        }
  const EmpiricalMDP emp = estimate_empirical(d, 3, 2);
  const ExtReal mi = exact_mi(emp, d);
  REQUIRE(mi.is_finite());
  CHECK(mi.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("exact_mi of deterministic dynamics with a uniform marginal is ln 4") {
  // 4 states, a single action, s -> s+1 mod 4; the next-state marginal is
  // uniform and the conditional is deterministic.
  Dataset d;
  d.kind = Kind::tabular;
  for (int s = 0; s < 4; ++s) {
    Transition t;
    t.s = s;
    t.a = 0;
    t.s_next = (s + 1) % 4;
    d.transitions.push_back(t);
  }
  const EmpiricalMDP emp = estimate_empirical(d, 4, 1);
  const ExtReal mi = exact_mi(emp, d);
  REQUIRE(mi.is_finite());
  CHECK(mi.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("exact_mi equals the plug-in entropy difference on self-sampled data") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto [emp, d] = test::random_empirical(4, 2, 6, rng, Domain::source);
    const ExtReal mi = exact_mi(emp, d);
    REQUIRE(mi.is_finite());
    // Independent formula: H(rho_next) - H(S'|S,A) from the count tensor.
    double n_total = 0.0;
    for (long long c : emp.counts) n_total += static_cast<double>(c);
    double h_cond = 0.0;
    for (int s = 0; s < 4; ++s)
      for (int a = 0; a < 2; ++a) {
        double row_total = 0.0;
        for (int s2 = 0; s2 < 4; ++s2) row_total += static_cast<double>(emp.count(s, a, s2));
        if (row_total == 0.0) continue;
        double h_row = 0.0;
        for (int s2 = 0; s2 < 4; ++s2) {
          const double p = emp.count(s, a, s2) / row_total;
          if (p > 0.0) h_row -= p * std::log(p);
        }
        h_cond += row_total / n_total * h_row;
      }
    const double plug_in = entropy(emp.rho_hat_next) - h_cond;
    CHECK(std::abs(mi.value - plug_in) < 1e-12);
  }
}

TEST_CASE("exact_mi flags support violations with a minus-infinity sentinel") {
  Dataset d;
  d.kind = Kind::tabular;
  Transition t;
  t.s = 0;
  t.a = 0;
  t.s_next = 1;
  d.transitions.push_back(t);
  const EmpiricalMDP emp = estimate_empirical(d, 2, 1);
  Dataset sampler = d;
  sampler.transitions[0].s_next = 0;  // never observed under emp
  std::vector<SupportViolation> violations;
  const ExtReal mi = exact_mi(emp, sampler, &violations);
  CHECK(mi.tag == ExtReal::Tag::neg_inf);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].s == 0);
  CHECK(violations[0].s_next == 0);
}

TEST_CASE("mi gap of identical domains is zero everywhere") {
  Rng rng(33);
  auto [emp, d] = test::random_empirical(3, 2, 5, rng, Domain::source);
  const MiGapReport rep = mi_gap(emp, emp, d, Domain::source);
  REQUIRE(rep.delta_i.is_finite());
  CHECK(rep.delta_i.value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.kl_state.value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.kl_dynamics.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("slip-shifted pairs satisfy the decomposition with a positive dynamics term") {
  EmpiricalMDP tar_emp;
  Dataset d_tar;
  auto [src_emp, d_src] = slip_pair_empiricals(0.1, 0.4, 101, tar_emp, d_tar);
  for (Domain domain : {Domain::source, Domain::target}) {
    const Dataset& sampler = domain == Domain::source ? d_src : d_tar;
    const MiGapReport rep = mi_gap(src_emp, tar_emp, sampler, domain);
    // The sampler matches its own empirical, so both KL terms are genuine
    // divergences and the gap equals their difference exactly.
    if (rep.delta_i.is_finite()) {
      const ExtReal rhs = decomposition_rhs(rep);
      REQUIRE(rhs.is_finite());
      CHECK(std::abs(rep.delta_i.value - rhs.value) < 1e-9);
    }
    REQUIRE(rep.kl_state.is_finite());
    CHECK(rep.kl_state.value >= -1e-12);
    // The slip gap is visible in the rows; an unsupported tuple in the other
    // domain legitimately pushes the dynamics term to +inf.
    if (rep.kl_dynamics.is_finite()) CHECK(rep.kl_dynamics.value > 0.05);
    else CHECK(rep.kl_dynamics.tag == ExtReal::Tag::pos_inf);
  }
}

TEST_CASE("the KL decomposition matches the direct gap on random pairs") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    auto [src_emp, d_src] = test::random_empirical(4, 2, 8, rng, Domain::source);
    auto [tar_emp, d_tar] = test::random_empirical(4, 2, 8, rng, Domain::target);
    for (Domain domain : {Domain::source, Domain::target}) {
      const Dataset& sampler = domain == Domain::source ? d_src : d_tar;
      const MiGapReport rep = decompose_theorem2(src_emp, tar_emp, sampler, domain);
      REQUIRE(rep.delta_i.is_finite());
      const ExtReal rhs = decomposition_rhs(rep);
      REQUIRE(rhs.is_finite());
      CHECK(std::abs(rep.delta_i.value - rhs.value) < 1e-9);
      // Entropy bounds on the gap.
      CHECK(rep.delta_i.value >= -rep.h_rho_src - 1e-9);
      CHECK(rep.delta_i.value <= rep.h_rho_tar + 1e-9);
    }
  }
}

TEST_CASE("performance bound vanishes when all models coincide") {
  Rng rng(41);
  auto [emp, d] = test::random_empirical(3, 2, 5, rng, Domain::source);
  const TabularMDP truth = empirical_to_mdp(emp, std::vector<double>(6, 0.5), 0.9,
                                            std::vector<double>{0.4, 0.3, 0.3});
  const TabularPolicy pi = test::random_policy(3, 2, rng);
  const MiGapReport rep = mi_gap(emp, emp, d, Domain::source);
  const ExtReal bound = performance_bound_rhs(truth, emp, emp, pi, 0.5, rep);
  REQUIRE(bound.is_finite());
  CHECK(bound.value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("performance bound is a valid lower bound on random instances") {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    auto [src_emp, d_src] = test::random_empirical(3, 2, 8, rng, Domain::source);
    auto [tar_emp, d_tar] = test::random_empirical(3, 2, 8, rng, Domain::target);
    std::vector<double> reward(6);
    for (double& r : reward) r = rng.uniform(-1.0, 1.0);
    const std::vector<double> rho0 = {0.5, 0.25, 0.25};
    const double discount = 0.95;
    const TabularMDP true_tar = empirical_to_mdp(tar_emp, reward, discount, rho0);
    const TabularMDP hat_src = empirical_to_mdp(src_emp, reward, discount, rho0);
    const TabularPolicy pi = test::random_policy(3, 2, rng);
    const MiGapReport rep = mi_gap(src_emp, tar_emp, d_src, Domain::source);
    REQUIRE(rep.delta_i.is_finite());
    const ExtReal bound = performance_bound_rhs(true_tar, tar_emp, src_emp, pi, 1.0, rep);
    REQUIRE(bound.is_finite());
    CHECK(bound.value <= 1e-12);
    const double diff = policy_return(true_tar, pi) - policy_return(hat_src, pi);
    CHECK(diff >= bound.value - 1e-9);
  }
}

TEST_CASE("brute-force contrastive loss closed forms") {
  Rng rng(47);
  auto [tar_emp, d_tar] = test::random_empirical(3, 2, 4, rng, Domain::target);
  auto [src_emp, d_src] = test::random_empirical(3, 2, 4, rng, Domain::source);
  SUBCASE("a constant score gives the uniform-softmax loss ln K") {
    for (int k : {2, 4, 8}) {
      Rng mc(7);
      const InfoNceEstimate est =
          exact_infonce([](int, int, int) { return 0.7; }, tar_emp, src_emp, k, 2000, mc);
      CHECK(est.mean == doctest::Approx(std::log(k - 1.0) - std::log(static_cast<double>(k)))
                            .epsilon(1e-12));
      CHECK(est.std_error < 1e-7);  // constant per-draw loss, rounding only
    }
  }
  SUBCASE("a two-level score with one negative has the logistic closed form") {
    // Positive candidates score e, negatives 1/e.
    Rng mc(8);
    const InfoNceEstimate est = exact_infonce(
        [](int, int, int) { return std::exp(1.0); }, [](int, int, int) { return std::exp(-1.0); },
        tar_emp, src_emp, 2, 2000, mc);
    const double loss = std::log(std::exp(1.0) + std::exp(-1.0)) - 1.0;  // ln(1 + e^-2)
    CHECK(std::log(1.0) - est.mean == doctest::Approx(loss).epsilon(1e-12));
  }
}

TEST_CASE("the optimal density-ratio score never certifies more than the exact gap") {
  Rng rng(53);
  for (int trial = 0; trial < 5; ++trial) {
    // Source rows all equal the target next-state marginal, so the source MI
    // term vanishes and negatives are drawn from the true marginal.
    auto [tar_emp, d_tar] = test::random_empirical(4, 2, 6, rng, Domain::target);
    std::vector<long long> marginal(4, 0);
    for (int s = 0; s < 4; ++s)
      for (int a = 0; a < 2; ++a)
        for (int s2 = 0; s2 < 4; ++s2) marginal[s2] += tar_emp.count(s, a, s2);
    Dataset d_src;
    d_src.kind = Kind::tabular;
    d_src.domain = Domain::source;
    for (int s = 0; s < 4; ++s)
      for (int a = 0; a < 2; ++a)
        for (int s2 = 0; s2 < 4; ++s2)
          for (long long i = 0; i < marginal[s2]; ++i) {
            Transition t;
            t.s = s;
            t.a = a;
            t.s_next = s2;
            d_src.transitions.push_back(t);
          }
    const EmpiricalMDP src_emp = estimate_empirical(d_src, 4, 2);
    const MiGapReport rep = mi_gap(src_emp, tar_emp, d_tar, Domain::target);
    REQUIRE(rep.delta_i.is_finite());

    const ScoreFn ratio = [&](int s, int a, int s2) {
      return tar_emp.p(s, a, s2) / tar_emp.rho_hat_next[s2];
    };
    for (int k : {4, 16}) {
      Rng mc(900 + trial * 10 + k);
      const InfoNceEstimate est = exact_infonce(ratio, tar_emp, src_emp, k, 200000, mc);
      CHECK(est.mean <= rep.delta_i.value + 3.0 * est.std_error);
    }
  }
}

TEST_CASE("exact dynamics ratio: zero on identical domains, sentinel on support gaps") {
  Rng rng(59);
  auto [emp, d] = test::random_empirical(3, 2, 5, rng, Domain::source);
  const ExtReal same = dynamics_ratio_exact(emp, emp, d);
  REQUIRE(same.is_finite());
  CHECK(same.value == doctest::Approx(0.0).epsilon(1e-12));

  GridworldShiftSpec spec;
  spec.slip_source = 0.0;
  spec.slip_target = 0.0;
  auto [src, tar] = make_gridworld_broken_pair(spec, 3);
  const TabularPolicy b = TabularPolicy::uniform(src.n_states, src.n_actions);
  const Dataset d_src = sample_dataset(src, b, 20000, 40, 3, Domain::source);
  const Dataset d_tar = sample_dataset(tar, b, 20000, 40, 4, Domain::target);
  const EmpiricalMDP src_emp = estimate_empirical(d_src, src.n_states, src.n_actions);
  const EmpiricalMDP tar_emp = estimate_empirical(d_tar, src.n_states, src.n_actions);
  std::vector<SupportViolation> violations;
  const ExtReal gap = dynamics_ratio_exact(src_emp, tar_emp, d_src, &violations);
  CHECK(gap.tag == ExtReal::Tag::neg_inf);
  CHECK_FALSE(violations.empty());
}

TEST_CASE("tagged extended reals serialize without IEEE specials") {
  CHECK(ExtReal::finite(1.5).str() == "1.5");
  CHECK(ExtReal::pos_inf().str() == "inf");
  CHECK(ExtReal::neg_inf().str() == "-inf");
}

TEST_CASE("entropy and KL degenerate conventions") {
  CHECK(entropy({1.0, 0.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(entropy({0.5, 0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const ExtReal finite = kl_divergence({0.5, 0.5}, {0.25, 0.75});
  REQUIRE(finite.is_finite());
  CHECK(finite.value > 0.0);
  CHECK(kl_divergence({0.5, 0.5}, {1.0, 0.0}).tag == ExtReal::Tag::pos_inf);
  // Zero mass in p tolerates zero mass in q.
  CHECK(kl_divergence({1.0, 0.0}, {1.0, 0.0}).is_finite());
}
