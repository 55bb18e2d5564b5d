#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "igdf/contrastive.hpp"
#include "igdf/envs.hpp"
#include "test_util.hpp"

using namespace igdf;

namespace {

// Single-layer tabular encoder whose raw outputs are directly controllable:
// phi output is a constant bias vector, psi output is the weight column of
// the one-hot next state.
Encoder craft_encoder(int n_states, int n_actions, int d) {
  Encoder enc;
  enc.d = d;
  enc.kind = Kind::tabular;
  enc.encoding = StateEncoding::one_hot;
  enc.n_states = n_states;
  enc.n_actions = n_actions;
  enc.phi = Mlp::zeros({n_states + n_actions, d});
  enc.psi = Mlp::zeros({n_states, d});
  return enc;
}

Transition tab(int s, int a, int s_next) {
  Transition t;
  t.s = s;
  t.a = a;
  t.s_next = s_next;
  return t;
}

Dataset toy_dataset(int n_states, int n_actions, int n, Domain domain, std::uint64_t seed) {
  Dataset d;
  d.kind = Kind::tabular;
  d.domain = domain;
  d.env_id = "toy";
  Rng rng(seed);
  for (int i = 0; i < n; ++i)
    d.transitions.push_back(
        tab(rng.index(n_states), rng.index(n_actions), rng.index(n_states)));
  return d;
}

std::vector<double> encoder_params(const Encoder& enc) {
  std::vector<double> p = flatten_params(enc.phi);
  const std::vector<double> q = flatten_params(enc.psi);
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

void set_encoder_params(Encoder& enc, std::span<const double> p) {
  const std::size_t n_phi = enc.phi.n_params();
  unflatten_params(enc.phi, p.subspan(0, n_phi));
  unflatten_params(enc.psi, p.subspan(n_phi));
}

}  // namespace

TEST_CASE("score range endpoints from aligned, orthogonal, and antipodal outputs") {
  Encoder enc = craft_encoder(2, 2, 2);
  enc.phi.biases[0] = {1.0, 0.0};
  SUBCASE("aligned representations score e") {
    enc.psi.weights[0](0, 0) = 1.0;  // psi(s'=0) = (1, 0)
    CHECK(score(enc, tab(0, 0, 0)) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  }
  SUBCASE("orthogonal representations score 1") {
    enc.psi.weights[0](1, 0) = 1.0;  // psi(s'=0) = (0, 1)
    CHECK(score(enc, tab(0, 0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("antipodal representations score 1/e") {
    enc.psi.weights[0](0, 0) = -1.0;  // psi(s'=0) = (-1, 0)
    CHECK(score(enc, tab(0, 0, 0)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
}

TEST_CASE("every score from a random encoder lies in the closed score range") {
  ContrastiveConfig cfg;
  cfg.d = 4;
  cfg.hidden = 16;
  cfg.seed = 5;
  const Dataset ref = toy_dataset(5, 3, 50, Domain::target, 1);
  const Encoder enc = make_encoder(cfg, ref);
  const std::vector<double> scores = score_batch(enc, ref.transitions);
  for (double h : scores) {
    CHECK(h >= std::exp(-1.0) - 1e-12);
    CHECK(h <= std::exp(1.0) + 1e-12);
  }
}

TEST_CASE("a constant encoder yields the uniform-softmax loss ln K") {
  Encoder enc = craft_encoder(3, 2, 2);
  enc.phi.biases[0] = {1.0, 0.0};
  for (int s2 = 0; s2 < 3; ++s2) enc.psi.weights[0](0, s2) = 1.0;
  NceBatch batch;
  for (int i = 0; i < 4; ++i) {
    batch.positives.push_back(tab(i % 3, 0, i % 3));
    batch.negatives.push_back({tab(0, 0, (i + 1) % 3), tab(0, 0, (i + 2) % 3),
                               tab(0, 0, i % 3)});
  }
  const double loss = nce_loss(enc, batch, nullptr, nullptr);
  CHECK(loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("single-negative loss with scores e and 1/e has the logistic closed form") {
  Encoder enc = craft_encoder(2, 1, 2);
  enc.phi.biases[0] = {1.0, 0.0};
  enc.psi.weights[0](0, 0) = 1.0;   // psi(0) = (1, 0): positive next state
  enc.psi.weights[0](0, 1) = -1.0;  // psi(1) = (-1, 0): negative next state
  NceBatch batch;
  batch.positives.push_back(tab(0, 0, 0));
  batch.negatives.push_back({tab(0, 0, 1)});
  const double loss = nce_loss(enc, batch, nullptr, nullptr);
  CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));
}

TEST_CASE("nce_loss rejects empty or ragged negative sets") {
  ContrastiveConfig cfg;
  cfg.d = 2;
  cfg.hidden = 4;
  const Dataset ref = toy_dataset(3, 2, 10, Domain::target, 2);
  const Encoder enc = make_encoder(cfg, ref);
  NceBatch empty_negs;
  empty_negs.positives.push_back(tab(0, 0, 1));
  empty_negs.negatives.push_back({});
  CHECK_THROWS(nce_loss(enc, empty_negs, nullptr, nullptr));
  NceBatch ragged;
  ragged.positives = {tab(0, 0, 1), tab(1, 0, 2)};
  ragged.negatives = {{tab(0, 0, 0)}, {tab(0, 0, 0), tab(0, 0, 2)}};
  CHECK_THROWS(nce_loss(enc, ragged, nullptr, nullptr));
}

namespace {

// Smallest raw (pre-normalization) embedding norm over every input the batch
// touches. Near-zero raw outputs sit on the sphere-normalization floor where
// finite differences are meaningless, so such draws are skipped below.
double min_raw_norm(const Encoder& enc, const NceBatch& batch) {
  std::vector<Transition> all = batch.positives;
  for (const auto& negs : batch.negatives) all.insert(all.end(), negs.begin(), negs.end());
  double mn = 1e300;
  for (const Transition& t : all) {
    Matrix phi_in(1, phi_input_dim(enc));
    Matrix psi_in(1, psi_input_dim(enc));
    encode_state_action(enc, t, phi_in.row(0));
    encode_next_state(enc, t, psi_in.row(0));
    for (const Matrix& raw : {mlp_forward(enc.phi, phi_in), mlp_forward(enc.psi, psi_in)}) {
      double n2 = 0.0;
      for (double v : raw.data) n2 += v * v;
      mn = std::min(mn, std::sqrt(n2));
    }
  }
  return mn;
}

}  // namespace

TEST_CASE("contrastive gradients match finite differences on a three-state toy") {
  Rng trial_rng(71);
  int checked = 0;
  for (std::uint64_t seed = 100; checked < 5 && seed < 200; ++seed) {
    ContrastiveConfig cfg;
    cfg.d = 3;
    cfg.hidden = 5;
    cfg.seed = seed;
    const Dataset ref = toy_dataset(3, 2, 20, Domain::target, cfg.seed);
    Encoder enc = make_encoder(cfg, ref);
    NceBatch batch;
    for (int i = 0; i < 3; ++i) {
      batch.positives.push_back(tab(trial_rng.index(3), trial_rng.index(2), trial_rng.index(3)));
      batch.negatives.push_back(
          {tab(0, 0, trial_rng.index(3)), tab(0, 0, trial_rng.index(3))});
    }
    if (min_raw_norm(enc, batch) < 1e-2) continue;
    ++checked;
    MlpGrads phi_g = MlpGrads::zeros_like(enc.phi);
    MlpGrads psi_g = MlpGrads::zeros_like(enc.psi);
    nce_loss(enc, batch, &phi_g, &psi_g);
    std::vector<double> analytic = flatten_grads(enc.phi, phi_g);
    const std::vector<double> psi_flat = flatten_grads(enc.psi, psi_g);
    analytic.insert(analytic.end(), psi_flat.begin(), psi_flat.end());
    const double err = gradient_check(
        [&](std::span<const double> p) {
          Encoder probe = enc;
          set_encoder_params(probe, p);
          return nce_loss(probe, batch, nullptr, nullptr);
        },
        encoder_params(enc), analytic);
    CHECK(err < 1e-5);
  }
  CHECK(checked == 5);
}

TEST_CASE("training is bit-deterministic in config and seed") {
  const Dataset d_src = toy_dataset(4, 2, 200, Domain::source, 11);
  const Dataset d_tar = toy_dataset(4, 2, 200, Domain::target, 12);
  ContrastiveConfig cfg;
  cfg.d = 4;
  cfg.hidden = 8;
  cfg.negatives_per_positive = 7;
  cfg.batch_size = 16;
  cfg.update_count = 30;
  cfg.seed = 9;
  const Encoder a = train_encoder(cfg, d_src, d_tar);
  const Encoder b = train_encoder(cfg, d_src, d_tar);
  CHECK(encoder_to_string(a, cfg.seed) == encoder_to_string(b, cfg.seed));
}

TEST_CASE("zero-gap training scores source and target tuples alike") {
  GridworldShiftSpec spec;
  spec.slip_source = 0.2;
  spec.slip_target = 0.2;
  auto [src, tar] = make_gridworld_pair(spec);
  const TabularPolicy b = make_behavior_policy(src, Quality::medium, 3);
  const Dataset d_src = sample_dataset(src, b, 4000, 40, 21, Domain::source);
  const Dataset d_tar = sample_dataset(tar, b, 4000, 40, 22, Domain::target);
  const Dataset held_src = sample_dataset(src, b, 1500, 40, 23, Domain::source);
  const Dataset held_tar = sample_dataset(tar, b, 1500, 40, 24, Domain::target);

  ContrastiveConfig cfg;
  cfg.d = 8;
  cfg.hidden = 32;
  cfg.negatives_per_positive = 15;
  cfg.update_count = 400;
  cfg.seed = 5;
  const Encoder enc = train_encoder(cfg, d_src, d_tar);

  auto mean_score = [&](const Dataset& d) {
    const std::vector<double> s = score_batch(enc, d.transitions);
    double sum = 0.0;
    for (double v : s) sum += v;
    return sum / s.size();
  };
  CHECK(std::abs(mean_score(held_src) - mean_score(held_tar)) < 0.05);
}

TEST_CASE("training separates target-consistent from target-impossible source tuples") {
  GridworldShiftSpec spec;
  spec.slip_source = 0.5;
  spec.slip_target = 0.0;
  auto [src, tar] = make_gridworld_pair(spec);
  const TabularPolicy b = make_behavior_policy(tar, Quality::medium, 3);
  const Dataset d_src = sample_dataset(src, b, 8000, 40, 31, Domain::source);
  const Dataset d_tar = sample_dataset(tar, b, 8000, 40, 32, Domain::target);
  const EmpiricalMDP tar_emp = estimate_empirical(d_tar, src.n_states, src.n_actions);

  ContrastiveConfig cfg;
  cfg.d = 8;
  cfg.hidden = 32;
  cfg.negatives_per_positive = 15;
  cfg.update_count = 600;
  cfg.seed = 6;
  const Encoder enc = train_encoder(cfg, d_src, d_tar);

  const std::vector<double> scores = score_batch(enc, d_src.transitions);
  double sum_in = 0.0, sum_out = 0.0;
  int n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Transition& t = d_src.transitions[i];
    if (tar_emp.p(t.s, t.a, t.s_next) > 0.0) {
      sum_in += scores[i];
      ++n_in;
    } else {
      sum_out += scores[i];
      ++n_out;
    }
  }
  REQUIRE(n_in > 0);
  REQUIRE(n_out > 0);
  CHECK(sum_in / n_in > sum_out / n_out);
}

TEST_CASE("the bound estimate of a constant encoder is negative exactly") {
  Encoder enc = craft_encoder(3, 2, 2);
  enc.phi.biases[0] = {1.0, 0.0};
  for (int s2 = 0; s2 < 3; ++s2) enc.psi.weights[0](0, s2) = 1.0;
  const Dataset d_src = toy_dataset(3, 2, 100, Domain::source, 41);
  const Dataset d_tar = toy_dataset(3, 2, 100, Domain::target, 42);
  const InfoNceEstimate est = estimate_i_nce(enc, d_src, d_tar, 8, 4, 16, 7);
  CHECK(est.mean == doctest::Approx(std::log(7.0) - std::log(8.0)).epsilon(1e-12));
  CHECK(est.mean < 0.0);
}

TEST_CASE("estimate_i_nce validates its candidate count") {
  const Dataset d = toy_dataset(3, 2, 10, Domain::target, 2);
  ContrastiveConfig cfg;
  cfg.d = 2;
  cfg.hidden = 4;
  const Encoder enc = make_encoder(cfg, d);
  CHECK_THROWS(estimate_i_nce(enc, d, d, 1, 1, 4, 0));
}

TEST_CASE("encoder checkpoints round-trip bit-identically") {
  ContrastiveConfig cfg;
  cfg.d = 4;
  cfg.hidden = 8;
  cfg.seed = 13;
  const Dataset ref = toy_dataset(4, 3, 40, Domain::target, 14);
  const Encoder enc = make_encoder(cfg, ref);
  const std::string text = encoder_to_string(enc, cfg.seed);
  std::istringstream is(text);
  const Encoder back = load_encoder(is);
  CHECK(back.d == enc.d);
  CHECK(back.n_states == enc.n_states);
  CHECK(back.n_actions == enc.n_actions);
  CHECK(encoder_to_string(back, cfg.seed) == text);
  // Identical scores after the round trip.
  CHECK(score_batch(back, ref.transitions) == score_batch(enc, ref.transitions));
}

TEST_CASE("training rejects mismatched dataset kinds") {
  const Dataset d_tab = toy_dataset(3, 2, 10, Domain::target, 2);
  Dataset d_cont;
  d_cont.kind = Kind::continuous;
  d_cont.state_dim = 2;
  d_cont.action_dim = 1;
  Transition t;
  t.sv = {0, 0};
  t.av = {0};
  t.sv_next = {1, 0};
  d_cont.transitions.push_back(t);
  ContrastiveConfig cfg;
  CHECK_THROWS(train_encoder(cfg, d_cont, d_tab));
}
