#include "igdf/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "igdf/matrix.hpp"

namespace igdf {

std::string to_string(Domain d) { return d == Domain::source ? "source" : "target"; }
std::string to_string(Kind k) { return k == Kind::tabular ? "tabular" : "continuous"; }

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw std::invalid_argument("unknown domain: " + s);
}

Kind kind_from_string(const std::string& s) {
  if (s == "tabular") return Kind::tabular;
  if (s == "continuous") return Kind::continuous;
  throw std::invalid_argument("unknown kind: " + s);
}

void TabularPolicy::validate() const {
  if (n_states <= 0 || n_actions <= 0)
    throw std::invalid_argument("TabularPolicy: dimensions must be positive");
  if (probs.size() != static_cast<std::size_t>(n_states) * n_actions)
    throw std::invalid_argument("TabularPolicy: probs size mismatch");
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      if (p(s, a) < 0.0) throw std::invalid_argument("TabularPolicy: negative probability");
      sum += p(s, a);
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("TabularPolicy: row does not sum to 1");
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  TabularPolicy pi;
  pi.n_states = n_states;
  pi.n_actions = n_actions;
  pi.probs.assign(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions);
  return pi;
}

void TabularMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0)
    throw std::invalid_argument("TabularMDP: dimensions must be positive");
  if (discount < 0.0 || discount >= 1.0)
    throw std::invalid_argument("TabularMDP: discount must lie in [0,1)");
  if (transition.size() != static_cast<std::size_t>(n_states) * n_actions * n_states)
    throw std::invalid_argument("TabularMDP: transition size mismatch");
  if (reward.size() != static_cast<std::size_t>(n_states) * n_actions)
    throw std::invalid_argument("TabularMDP: reward size mismatch");
  if (initial_dist.size() != static_cast<std::size_t>(n_states))
    throw std::invalid_argument("TabularMDP: initial_dist size mismatch");
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        if (p(s, a, s2) < 0.0) throw std::invalid_argument("TabularMDP: negative probability");
        sum += p(s, a, s2);
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("TabularMDP: transition row does not sum to 1");
    }
  double isum = 0.0;
  for (double v : initial_dist) {
    if (v < 0.0) throw std::invalid_argument("TabularMDP: negative initial probability");
    isum += v;
  }
  if (std::abs(isum - 1.0) > 1e-12)
    throw std::invalid_argument("TabularMDP: initial_dist does not sum to 1");
}

Dataset sample_dataset(const TabularMDP& mdp, const TabularPolicy& policy, int n_transitions,
                       int horizon, std::uint64_t seed, Domain domain,
                       const std::string& env_id, const std::string& behavior_id) {
  if (n_transitions < 1) throw std::invalid_argument("sample_dataset: n_transitions must be >= 1");
  if (horizon < 1) throw std::invalid_argument("sample_dataset: horizon must be >= 1");
  mdp.validate();
  policy.validate();
  double isum = 0.0;
  for (double v : mdp.initial_dist) isum += v;
  if (isum <= 0.0) throw std::invalid_argument("sample_dataset: zero-probability initial distribution");

  Dataset d;
  d.kind = Kind::tabular;
  d.domain = domain;
  d.env_id = env_id;
  d.behavior_id = behavior_id;
  d.seed = seed;
  d.transitions.reserve(n_transitions);

  Rng rng(seed);
  int t_in_episode = 0;
  int s = rng.categorical(mdp.initial_dist);
  for (int i = 0; i < n_transitions; ++i) {
    std::span<const double> pi_row(policy.probs.data() + static_cast<std::size_t>(s) * policy.n_actions,
                                   static_cast<std::size_t>(policy.n_actions));
    const int a = rng.categorical(pi_row);
    std::span<const double> p_row(
        mdp.transition.data() + (static_cast<std::size_t>(s) * mdp.n_actions + a) * mdp.n_states,
        static_cast<std::size_t>(mdp.n_states));
    const int s2 = rng.categorical(p_row);
    Transition tr;
    tr.s = s;
    tr.a = a;
    tr.s_next = s2;
    tr.reward = mdp.r(s, a);
    tr.terminal = false;
    d.transitions.push_back(tr);
    ++t_in_episode;
    if (t_in_episode >= horizon) {
      t_in_episode = 0;
      s = rng.categorical(mdp.initial_dist);
    } else {
      s = s2;
    }
  }
  return d;
}

EmpiricalMDP estimate_empirical(const Dataset& dataset, int n_states, int n_actions) {
  if (dataset.kind != Kind::tabular)
    throw std::invalid_argument("estimate_empirical: unsupported kind (continuous)");
  if (dataset.transitions.empty())
    throw std::invalid_argument("estimate_empirical: empty dataset");
  if (n_states < 0 || n_actions < 0) {
    int ms = 0, ma = 0;
    for (const auto& t : dataset.transitions) {
      ms = std::max({ms, t.s, t.s_next});
      ma = std::max(ma, t.a);
    }
    if (n_states < 0) n_states = ms + 1;
    if (n_actions < 0) n_actions = ma + 1;
  }

  EmpiricalMDP emp;
  emp.n_states = n_states;
  emp.n_actions = n_actions;
  emp.counts.assign(static_cast<std::size_t>(n_states) * n_actions * n_states, 0);
  emp.p_hat.assign(emp.counts.size(), 0.0);
  emp.rho_hat_next.assign(n_states, 0.0);
  emp.support_mask.assign(static_cast<std::size_t>(n_states) * n_actions, 0);

  for (const auto& t : dataset.transitions) {
    if (t.s < 0 || t.s >= n_states || t.s_next < 0 || t.s_next >= n_states || t.a < 0 ||
        t.a >= n_actions)
      throw std::invalid_argument("estimate_empirical: transition out of range");
    ++emp.counts[(static_cast<std::size_t>(t.s) * n_actions + t.a) * n_states + t.s_next];
    emp.rho_hat_next[t.s_next] += 1.0;
  }
  const double n = static_cast<double>(dataset.transitions.size());
  for (double& v : emp.rho_hat_next) v /= n;
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) {
      long long tot = 0;
      const std::size_t base = (static_cast<std::size_t>(s) * n_actions + a) * n_states;
      for (int s2 = 0; s2 < n_states; ++s2) tot += emp.counts[base + s2];
      if (tot > 0) {
        emp.support_mask[static_cast<std::size_t>(s) * n_actions + a] = 1;
        for (int s2 = 0; s2 < n_states; ++s2)
          emp.p_hat[base + s2] = static_cast<double>(emp.counts[base + s2]) / static_cast<double>(tot);
      }
    }
  return emp;
}

namespace {

// Policy-averaged transition matrix P_pi[s][s'].
Matrix policy_transition(const TabularMDP& mdp, const TabularPolicy& policy) {
  Matrix p(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = policy.p(s, a);
      if (pa == 0.0) continue;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) p(s, s2) += pa * mdp.p(s, a, s2);
    }
  return p;
}

}  // namespace

std::vector<double> discounted_visitation(const TabularMDP& mdp, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate();
  const int n = mdp.n_states;
  const Matrix p_pi = policy_transition(mdp, policy);
  // Solve (I - gamma P_pi^T) rho = (1 - gamma) rho0.
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - mdp.discount * p_pi(j, i);
  std::vector<double> b(n);
  for (int i = 0; i < n; ++i) b[i] = (1.0 - mdp.discount) * mdp.initial_dist[i];
  std::vector<double> rho = solve_linear(a, b);
  double sum = 0.0;
  for (double v : rho) sum += v;
  for (double& v : rho) v /= sum;
  return rho;
}

std::vector<double> policy_values(const TabularMDP& mdp, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate();
  const int n = mdp.n_states;
  const Matrix p_pi = policy_transition(mdp, policy);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - mdp.discount * p_pi(i, j);
  std::vector<double> b(n, 0.0);
  for (int s = 0; s < n; ++s)
    for (int act = 0; act < mdp.n_actions; ++act) b[s] += policy.p(s, act) * mdp.r(s, act);
  return solve_linear(a, b);
}

double policy_return(const TabularMDP& mdp, const TabularPolicy& policy) {
  const std::vector<double> v = policy_values(mdp, policy);
  double eta = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) eta += mdp.initial_dist[s] * v[s];
  return eta;
}

std::vector<double> optimal_q(const TabularMDP& mdp, double tol) {
  mdp.validate();
  const int ns = mdp.n_states, na = mdp.n_actions;
  std::vector<double> q(static_cast<std::size_t>(ns) * na, 0.0);
  std::vector<double> vmax(ns, 0.0);
  double gap = 1.0;
  while (gap > tol) {
    for (int s = 0; s < ns; ++s) {
      double best = q[static_cast<std::size_t>(s) * na];
      for (int a = 1; a < na; ++a) best = std::max(best, q[static_cast<std::size_t>(s) * na + a]);
      vmax[s] = best;
    }
    gap = 0.0;
    for (int s = 0; s < ns; ++s)
      for (int a = 0; a < na; ++a) {
        double acc = mdp.r(s, a);
        for (int s2 = 0; s2 < ns; ++s2) {
          const double p = mdp.p(s, a, s2);
          if (p > 0.0) acc += mdp.discount * p * vmax[s2];
        }
        const std::size_t idx = static_cast<std::size_t>(s) * na + a;
        gap = std::max(gap, std::abs(acc - q[idx]));
        q[idx] = acc;
      }
  }
  return q;
}

TabularPolicy greedy_policy_from_q(const TabularMDP& mdp, const std::vector<double>& q) {
  TabularPolicy pi;
  pi.n_states = mdp.n_states;
  pi.n_actions = mdp.n_actions;
  pi.probs.assign(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions, 0.0);
  for (int s = 0; s < mdp.n_states; ++s) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions; ++a)
      if (q[static_cast<std::size_t>(s) * mdp.n_actions + a] >
          q[static_cast<std::size_t>(s) * mdp.n_actions + best])
        best = a;
    pi.pref(s, best) = 1.0;
  }
  return pi;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_vector(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

std::vector<double> parse_vector(const std::string& field) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < field.size()) {
    std::size_t next = field.find(',', pos);
    if (next == std::string::npos) next = field.size();
    out.push_back(std::stod(field.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

// Split a record line on ", " (field separator); commas without a following
// space stay inside vector fields.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t next = line.find(", ", pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 2;
  }
  return out;
}

std::string header_value(const std::string& header, const std::string& key) {
  // Anchored on the field separator so e.g. "n=" never matches inside
  // "domain=".
  const std::string needle = "; " + key + "=";
  std::size_t pos = header.find(needle);
  if (pos == std::string::npos) return "";
  pos += needle.size();
  std::size_t end = header.find(';', pos);
  if (end == std::string::npos) end = header.size();
  return header.substr(pos, end - pos);
}

}  // namespace

void save_dataset(std::ostream& os, const Dataset& d) {
  if (d.transitions.empty()) throw std::invalid_argument("save_dataset: empty dataset");
  os << "igdf-dataset v1; kind=" << to_string(d.kind) << "; domain=" << to_string(d.domain)
     << "; env=" << d.env_id << "; seed=" << d.seed << "; n=" << d.transitions.size();
  if (d.kind == Kind::continuous) os << "; sdim=" << d.state_dim << "; adim=" << d.action_dim;
  if (!d.behavior_id.empty()) os << "; behavior=" << d.behavior_id;
  os << "\n";
  for (const auto& t : d.transitions) {
    if (d.kind == Kind::tabular) {
      os << t.s << ", " << t.a << ", " << fmt_double(t.reward) << ", " << t.s_next << ", "
         << (t.terminal ? 1 : 0) << "\n";
    } else {
      os << join_vector(t.sv) << ", " << join_vector(t.av) << ", " << fmt_double(t.reward) << ", "
         << join_vector(t.sv_next) << ", " << (t.terminal ? 1 : 0) << "\n";
    }
  }
}

void save_dataset_file(const std::string& path, const Dataset& d) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_dataset_file: cannot open " + path);
  save_dataset(f, d);
}

std::string dataset_to_string(const Dataset& d) {
  std::ostringstream os;
  save_dataset(os, d);
  return os.str();
}

Dataset load_dataset(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("load_dataset: missing header");
  if (header.rfind("igdf-dataset v1;", 0) != 0)
    throw std::runtime_error("load_dataset: bad header: " + header);
  Dataset d;
  d.kind = kind_from_string(header_value(header, "kind"));
  d.domain = domain_from_string(header_value(header, "domain"));
  d.env_id = header_value(header, "env");
  d.seed = std::stoull(header_value(header, "seed"));
  d.behavior_id = header_value(header, "behavior");
  const std::size_t n = std::stoull(header_value(header, "n"));
  if (d.kind == Kind::continuous) {
    d.state_dim = std::stoi(header_value(header, "sdim"));
    d.action_dim = std::stoi(header_value(header, "adim"));
  }
  d.transitions.reserve(n);
  std::string line;
  while (d.transitions.size() < n && std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 5) throw std::runtime_error("load_dataset: bad record: " + line);
    Transition t;
    if (d.kind == Kind::tabular) {
      t.s = std::stoi(fields[0]);
      t.a = std::stoi(fields[1]);
      t.reward = std::stod(fields[2]);
      t.s_next = std::stoi(fields[3]);
    } else {
      t.sv = parse_vector(fields[0]);
      t.av = parse_vector(fields[1]);
      t.reward = std::stod(fields[2]);
      t.sv_next = parse_vector(fields[3]);
      if (static_cast<int>(t.sv.size()) != d.state_dim ||
          static_cast<int>(t.sv_next.size()) != d.state_dim ||
          static_cast<int>(t.av.size()) != d.action_dim)
        throw std::runtime_error("load_dataset: vector dimension mismatch");
    }
    t.terminal = std::stoi(fields[4]) != 0;
    d.transitions.push_back(t);
  }
  if (d.transitions.size() != n) throw std::runtime_error("load_dataset: truncated dataset");
  return d;
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_dataset_file: cannot open " + path);
  return load_dataset(f);
}

}  // namespace igdf
