#include "igdf/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace igdf {

std::string to_string(Quality q) {
  switch (q) {
    case Quality::medium: return "medium";
    case Quality::medium_replay_mix: return "medium_replay_mix";
    case Quality::expert_mix: return "expert_mix";
  }
  return "?";
}

Quality quality_from_string(const std::string& s) {
  if (s == "medium") return Quality::medium;
  if (s == "medium_replay_mix") return Quality::medium_replay_mix;
  if (s == "expert_mix") return Quality::expert_mix;
  throw std::invalid_argument("unknown quality: " + s);
}

void GridworldShiftSpec::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("gridworld: size must be positive");
  if (slip_source < 0.0 || slip_source > 1.0 || slip_target < 0.0 || slip_target > 1.0)
    throw std::invalid_argument("gridworld: slip must lie in [0,1]");
  if (goal_x < 0 || goal_x >= width || goal_y < 0 || goal_y >= height)
    throw std::invalid_argument("gridworld: goal outside grid");
  if (discount < 0.0 || discount >= 1.0) throw std::invalid_argument("gridworld: bad discount");
}

namespace {

constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {-1, 1, 0, 0};

int clamped_move(const GridworldShiftSpec& spec, int s, int dir) {
  const int x = s % spec.width;
  const int y = s / spec.width;
  const int nx = std::clamp(x + kDx[dir], 0, spec.width - 1);
  const int ny = std::clamp(y + kDy[dir], 0, spec.height - 1);
  return spec.state_id(nx, ny);
}

TabularMDP make_gridworld(const GridworldShiftSpec& spec, double slip, int broken_action) {
  const int ns = spec.n_states();
  const int na = 4;
  const int goal = spec.state_id(spec.goal_x, spec.goal_y);

  TabularMDP m;
  m.n_states = ns;
  m.n_actions = na;
  m.discount = spec.discount;
  m.transition.assign(static_cast<std::size_t>(ns) * na * ns, 0.0);
  m.reward.assign(static_cast<std::size_t>(ns) * na, 0.0);
  m.initial_dist.assign(ns, 0.0);

  // Uniform start over non-goal cells.
  for (int s = 0; s < ns; ++s)
    if (s != goal) m.initial_dist[s] = 1.0 / (ns - 1);

  for (int s = 0; s < ns; ++s)
    for (int a = 0; a < na; ++a) {
      m.rref(s, a) = (s == goal) ? spec.goal_reward : spec.step_reward;
      if (s == goal) {
        m.pref(s, a, goal) = 1.0;  // absorbing
        continue;
      }
      if (a == broken_action) {
        m.pref(s, a, s) = 1.0;  // no-op action
        continue;
      }
      m.pref(s, a, clamped_move(spec, s, a)) += 1.0 - slip;
      for (int d = 0; d < 4; ++d) {
        if (d == a) continue;
        m.pref(s, a, clamped_move(spec, s, d)) += slip / 3.0;
      }
    }
  m.validate();
  return m;
}

}  // namespace

std::pair<TabularMDP, TabularMDP> make_gridworld_pair(const GridworldShiftSpec& spec) {
  spec.validate();
  return {make_gridworld(spec, spec.slip_source, -1), make_gridworld(spec, spec.slip_target, -1)};
}

std::pair<TabularMDP, TabularMDP> make_gridworld_broken_pair(const GridworldShiftSpec& spec,
                                                             int broken_action) {
  spec.validate();
  if (broken_action < 0 || broken_action >= 4)
    throw std::invalid_argument("broken_action must be one of the four directions");
  return {make_gridworld(spec, spec.slip_source, broken_action),
          make_gridworld(spec, spec.slip_target, -1)};
}

void PointMassShiftSpec::validate() const {
  if (mass_source <= 0.0 || mass_target <= 0.0)
    throw std::invalid_argument("pointmass: masses must be positive");
  if (friction_source < 0.0 || friction_source >= 1.0 || friction_target < 0.0 ||
      friction_target >= 1.0)
    throw std::invalid_argument("pointmass: friction must lie in [0,1)");
  if (action_noise_source < 0.0 || action_noise_target < 0.0)
    throw std::invalid_argument("pointmass: action noise must be >= 0");
  if (horizon < 1) throw std::invalid_argument("pointmass: horizon must be >= 1");
  if (dt <= 0.0) throw std::invalid_argument("pointmass: dt must be positive");
}

namespace {

ContinuousEnv make_pointmass(const PointMassShiftSpec& spec, double mass, double friction,
                             double action_noise) {
  ContinuousEnv env;
  env.state_dim = 4;
  env.action_dim = 2;
  env.horizon = spec.horizon;
  env.reset = [](Rng& rng) {
    return std::vector<double>{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0, 0.0};
  };
  const double gx = spec.goal_x, gy = spec.goal_y, dt = spec.dt;
  env.step = [mass, friction, action_noise, gx, gy, dt](std::span<const double> s,
                                                        std::span<const double> a, Rng& rng) {
    double ax = std::clamp(a[0], -1.0, 1.0);
    double ay = std::clamp(a[1], -1.0, 1.0);
    if (action_noise > 0.0) {
      ax += rng.uniform(-action_noise, action_noise);
      ay += rng.uniform(-action_noise, action_noise);
    }
    const double vx = (1.0 - friction) * s[2] + (ax / mass) * dt;
    const double vy = (1.0 - friction) * s[3] + (ay / mass) * dt;
    const double x = s[0] + vx * dt;
    const double y = s[1] + vy * dt;
    const double reward = -std::sqrt((x - gx) * (x - gx) + (y - gy) * (y - gy));
    return std::make_pair(std::vector<double>{x, y, vx, vy}, reward);
  };
  return env;
}

}  // namespace

std::pair<ContinuousEnv, ContinuousEnv> make_pointmass_pair(const PointMassShiftSpec& spec) {
  spec.validate();
  return {make_pointmass(spec, spec.mass_source, spec.friction_source, spec.action_noise_source),
          make_pointmass(spec, spec.mass_target, spec.friction_target, spec.action_noise_target)};
}

TabularPolicy make_behavior_policy(const TabularMDP& mdp, Quality quality, std::uint64_t seed) {
  (void)seed;  // tabular construction is deterministic; seed kept for the contract
  const std::vector<double> q = optimal_q(mdp);
  const TabularPolicy greedy = greedy_policy_from_q(mdp, q);
  const int ns = mdp.n_states, na = mdp.n_actions;

  auto eps_greedy = [&](double eps) {
    TabularPolicy pi = TabularPolicy::uniform(ns, na);
    for (int s = 0; s < ns; ++s)
      for (int a = 0; a < na; ++a)
        pi.pref(s, a) = eps / na + (1.0 - eps) * greedy.p(s, a);
    return pi;
  };

  switch (quality) {
    case Quality::medium: return eps_greedy(0.3);
    case Quality::expert_mix: return eps_greedy(0.05);
    case Quality::medium_replay_mix: {
      const TabularPolicy med = eps_greedy(0.3);
      TabularPolicy pi = TabularPolicy::uniform(ns, na);
      for (int s = 0; s < ns; ++s)
        for (int a = 0; a < na; ++a) pi.pref(s, a) = 0.5 / na + 0.5 * med.p(s, a);
      return pi;
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<double> PdController::act(std::span<const double> state, Rng& rng) const {
  const double ax = kp * (goal_x - state[0]) - kd * state[2] + noise * rng.normal();
  const double ay = kp * (goal_y - state[1]) - kd * state[3] + noise * rng.normal();
  return {std::clamp(ax, -1.0, 1.0), std::clamp(ay, -1.0, 1.0)};
}

PdController make_pd_controller(const PointMassShiftSpec& spec, Quality quality) {
  PdController pd;
  pd.goal_x = spec.goal_x;
  pd.goal_y = spec.goal_y;
  switch (quality) {
    case Quality::expert_mix: pd.noise = 0.1; break;
    case Quality::medium: pd.noise = 0.4; break;
    case Quality::medium_replay_mix: pd.noise = 0.8; break;
  }
  return pd;
}

Dataset sample_continuous_dataset(const ContinuousEnv& env, const PdController& pd,
                                  int n_transitions, std::uint64_t seed, Domain domain,
                                  const std::string& env_id, const std::string& behavior_id) {
  if (n_transitions < 1)
    throw std::invalid_argument("sample_continuous_dataset: n_transitions must be >= 1");
  Dataset d;
  d.kind = Kind::continuous;
  d.domain = domain;
  d.env_id = env_id;
  d.behavior_id = behavior_id;
  d.seed = seed;
  d.state_dim = env.state_dim;
  d.action_dim = env.action_dim;
  d.transitions.reserve(n_transitions);

  Rng rng(seed);
  std::vector<double> s = env.reset(rng);
  int t_in_episode = 0;
  for (int i = 0; i < n_transitions; ++i) {
    const std::vector<double> a = pd.act(s, rng);
    auto [s2, r] = env.step(s, a, rng);
    ++t_in_episode;
    Transition tr;
    tr.sv = s;
    tr.av = a;
    tr.sv_next = s2;
    tr.reward = r;
    tr.terminal = t_in_episode >= env.horizon;
    d.transitions.push_back(tr);
    if (tr.terminal) {
      t_in_episode = 0;
      s = env.reset(rng);
    } else {
      s = std::move(s2);
    }
  }
  return d;
}

double expected_dynamics_kl(const TabularMDP& a, const TabularMDP& b) {
  if (a.n_states != b.n_states || a.n_actions != b.n_actions)
    throw std::invalid_argument("expected_dynamics_kl: space mismatch");
  double total = 0.0;
  int cells = 0;
  for (int s = 0; s < a.n_states; ++s)
    for (int act = 0; act < a.n_actions; ++act) {
      double kl = 0.0;
      for (int s2 = 0; s2 < a.n_states; ++s2) {
        const double p = a.p(s, act, s2);
        if (p == 0.0) continue;
        const double q = b.p(s, act, s2);
        if (q == 0.0) return std::numeric_limits<double>::infinity();
        kl += p * std::log(p / q);
      }
      total += kl;
      ++cells;
    }
  return total / cells;
}

}  // namespace igdf
