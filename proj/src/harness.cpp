#include "igdf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace igdf {

using nlohmann::json;

std::string to_string(Mode m) {
  switch (m) {
    case Mode::igdf: return "igdf";
    case Mode::naive_merge: return "naive_merge";
    case Mode::target_only: return "target_only";
    case Mode::dara_reward: return "dara_reward";
    case Mode::reward_mod_variant: return "reward_mod_variant";
  }
  throw std::logic_error("to_string(Mode)");
}

Mode mode_from_string(const std::string& s) {
  if (s == "igdf") return Mode::igdf;
  if (s == "naive_merge") return Mode::naive_merge;
  if (s == "target_only") return Mode::target_only;
  if (s == "dara_reward") return Mode::dara_reward;
  if (s == "reward_mod_variant") return Mode::reward_mod_variant;
  throw std::invalid_argument("unknown mode: " + s);
}

std::string to_string(EnvFamily f) {
  switch (f) {
    case EnvFamily::gridworld: return "gridworld";
    case EnvFamily::gridworld_broken: return "gridworld_broken";
    case EnvFamily::pointmass: return "pointmass";
  }
  throw std::logic_error("to_string(EnvFamily)");
}

EnvFamily family_from_string(const std::string& s) {
  if (s == "gridworld") return EnvFamily::gridworld;
  if (s == "gridworld_broken") return EnvFamily::gridworld_broken;
  if (s == "pointmass") return EnvFamily::pointmass;
  throw std::invalid_argument("unknown env family: " + s);
}

void ExperimentConfig::validate() const {
  if (n_seeds < 1) throw std::invalid_argument("ExperimentConfig: n_seeds must be >= 1");
  if (!(data.target_ratio > 0.0 && data.target_ratio <= 1.0))
    throw std::invalid_argument("ExperimentConfig: target_ratio must be in (0, 1]");
  if (data.n_source < 0 || data.n_target <= 0 || data.horizon <= 0)
    throw std::invalid_argument("ExperimentConfig: bad data sizes");
  if (eval_episodes < 1) throw std::invalid_argument("ExperimentConfig: eval_episodes >= 1");
  if (family == EnvFamily::pointmass) pointmass.validate();
  else gridworld.validate();
  contrastive.validate();
  filter.validate();
  iql.validate();
}

namespace {

// Strict object reader: every key must be consumed exactly once.
struct StrictObject {
  const json& obj;
  std::string where;
  std::vector<std::string> seen;

  StrictObject(const json& j, std::string w) : obj(j), where(std::move(w)) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  }

  bool has(const std::string& key) const { return obj.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!obj.contains(key)) return;
    seen.push_back(key);
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: bad value for " + where + "." + key);
    }
  }

  const json& child(const std::string& key) {
    seen.push_back(key);
    return obj.at(key);
  }

  void finish() {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::find(seen.begin(), seen.end(), it.key()) == seen.end())
        throw std::invalid_argument("config: unknown key " + where + "." + it.key());
    }
  }
};

void parse_gridworld(const json& j, GridworldShiftSpec& g, int& broken_action) {
  StrictObject o(j, "env");
  std::string family;
  o.get("family", family);
  o.get("width", g.width);
  o.get("height", g.height);
  o.get("slip_source", g.slip_source);
  o.get("slip_target", g.slip_target);
  o.get("goal_x", g.goal_x);
  o.get("goal_y", g.goal_y);
  o.get("step_reward", g.step_reward);
  o.get("goal_reward", g.goal_reward);
  o.get("discount", g.discount);
  o.get("broken_action", broken_action);
  o.finish();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: parse error: ") + e.what());
  }
  StrictObject root(j, "root");
  int version = 0;
  root.get("version", version);
  if (version != 1) throw std::invalid_argument("config: version must be 1");

  ExperimentConfig cfg;
  root.get("name", cfg.name);
  std::string mode_s = to_string(cfg.mode);
  root.get("mode", mode_s);
  cfg.mode = mode_from_string(mode_s);
  root.get("sigma", cfg.sigma);
  root.get("n_seeds", cfg.n_seeds);
  root.get("seed", cfg.seed);
  root.get("eval_episodes", cfg.eval_episodes);
  root.get("out_dir", cfg.out_dir);

  if (root.has("env")) {
    const json& env = root.child("env");
    StrictObject probe(env, "env");
    std::string family = "gridworld";
    probe.get("family", family);
    cfg.family = family_from_string(family);
    if (cfg.family == EnvFamily::pointmass) {
      StrictObject o(env, "env");
      std::string f2;
      o.get("family", f2);
      o.get("dt", cfg.pointmass.dt);
      o.get("mass_source", cfg.pointmass.mass_source);
      o.get("mass_target", cfg.pointmass.mass_target);
      o.get("friction_source", cfg.pointmass.friction_source);
      o.get("friction_target", cfg.pointmass.friction_target);
      o.get("action_noise_source", cfg.pointmass.action_noise_source);
      o.get("action_noise_target", cfg.pointmass.action_noise_target);
      o.get("horizon", cfg.pointmass.horizon);
      o.get("goal_x", cfg.pointmass.goal_x);
      o.get("goal_y", cfg.pointmass.goal_y);
      o.finish();
    } else {
      parse_gridworld(env, cfg.gridworld, cfg.broken_action);
    }
  }
  if (root.has("data")) {
    StrictObject o(root.child("data"), "data");
    o.get("n_source", cfg.data.n_source);
    o.get("n_target", cfg.data.n_target);
    o.get("target_ratio", cfg.data.target_ratio);
    std::string q = to_string(cfg.data.quality);
    o.get("quality", q);
    cfg.data.quality = quality_from_string(q);
    o.get("horizon", cfg.data.horizon);
    o.finish();
  }
  if (root.has("contrastive")) {
    StrictObject o(root.child("contrastive"), "contrastive");
    o.get("d", cfg.contrastive.d);
    o.get("k_minus_1", cfg.contrastive.negatives_per_positive);
    o.get("learning_rate", cfg.contrastive.learning_rate);
    o.get("batch_size", cfg.contrastive.batch_size);
    o.get("update_count", cfg.contrastive.update_count);
    o.get("hidden", cfg.contrastive.hidden);
    o.finish();
  }
  if (root.has("filter")) {
    StrictObject o(root.child("filter"), "filter");
    o.get("xi", cfg.filter.xi);
    o.get("alpha", cfg.filter.alpha);
    o.get("batch_size", cfg.filter.batch_size);
    o.finish();
  }
  if (root.has("iql")) {
    StrictObject o(root.child("iql"), "iql");
    o.get("tau", cfg.iql.tau);
    o.get("awr_temperature", cfg.iql.awr_temperature);
    o.get("discount", cfg.iql.discount);
    o.get("mu", cfg.iql.mu);
    o.get("q_lr", cfg.iql.q_lr);
    o.get("v_lr", cfg.iql.v_lr);
    o.get("pi_lr", cfg.iql.pi_lr);
    o.get("td_steps", cfg.iql.td_steps);
    o.get("policy_steps", cfg.iql.policy_steps);
    o.get("batch_size", cfg.iql.batch_size);
    o.get("hidden", cfg.iql.hidden);
    o.get("interleaved", cfg.iql.interleaved);
    o.get("eval_every", cfg.iql.eval_every);
    o.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_experiment_config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["version"] = 1;
  j["name"] = cfg.name;
  j["mode"] = to_string(cfg.mode);
  j["sigma"] = cfg.sigma;
  j["n_seeds"] = cfg.n_seeds;
  j["seed"] = cfg.seed;
  j["eval_episodes"] = cfg.eval_episodes;
  j["out_dir"] = cfg.out_dir;
  json env;
  env["family"] = to_string(cfg.family);
  if (cfg.family == EnvFamily::pointmass) {
    env["dt"] = cfg.pointmass.dt;
    env["mass_source"] = cfg.pointmass.mass_source;
    env["mass_target"] = cfg.pointmass.mass_target;
    env["friction_source"] = cfg.pointmass.friction_source;
    env["friction_target"] = cfg.pointmass.friction_target;
    env["action_noise_source"] = cfg.pointmass.action_noise_source;
    env["action_noise_target"] = cfg.pointmass.action_noise_target;
    env["horizon"] = cfg.pointmass.horizon;
    env["goal_x"] = cfg.pointmass.goal_x;
    env["goal_y"] = cfg.pointmass.goal_y;
  } else {
    env["width"] = cfg.gridworld.width;
    env["height"] = cfg.gridworld.height;
    env["slip_source"] = cfg.gridworld.slip_source;
    env["slip_target"] = cfg.gridworld.slip_target;
    env["goal_x"] = cfg.gridworld.goal_x;
    env["goal_y"] = cfg.gridworld.goal_y;
    env["step_reward"] = cfg.gridworld.step_reward;
    env["goal_reward"] = cfg.gridworld.goal_reward;
    env["discount"] = cfg.gridworld.discount;
    if (cfg.family == EnvFamily::gridworld_broken) env["broken_action"] = cfg.broken_action;
  }
  j["env"] = env;
  j["data"] = {{"n_source", cfg.data.n_source},
               {"n_target", cfg.data.n_target},
               {"target_ratio", cfg.data.target_ratio},
               {"quality", to_string(cfg.data.quality)},
               {"horizon", cfg.data.horizon}};
  j["contrastive"] = {{"d", cfg.contrastive.d},
                      {"k_minus_1", cfg.contrastive.negatives_per_positive},
                      {"learning_rate", cfg.contrastive.learning_rate},
                      {"batch_size", cfg.contrastive.batch_size},
                      {"update_count", cfg.contrastive.update_count},
                      {"hidden", cfg.contrastive.hidden}};
  j["filter"] = {{"xi", cfg.filter.xi},
                 {"alpha", cfg.filter.alpha},
                 {"batch_size", cfg.filter.batch_size}};
  j["iql"] = {{"tau", cfg.iql.tau},
              {"awr_temperature", cfg.iql.awr_temperature},
              {"discount", cfg.iql.discount},
              {"mu", cfg.iql.mu},
              {"q_lr", cfg.iql.q_lr},
              {"v_lr", cfg.iql.v_lr},
              {"pi_lr", cfg.iql.pi_lr},
              {"td_steps", cfg.iql.td_steps},
              {"policy_steps", cfg.iql.policy_steps},
              {"batch_size", cfg.iql.batch_size},
              {"hidden", cfg.iql.hidden},
              {"interleaved", cfg.iql.interleaved},
              {"eval_every", cfg.iql.eval_every}};
  return j.dump(2) + "\n";
}

Dataset reward_mod_variant(const Encoder& enc, const Dataset& d_src, double sigma) {
  Dataset out = d_src;
  if (sigma == 0.0 || out.transitions.empty()) return out;
  const std::vector<double> logits = score_logits(enc, out.transitions);
  for (std::size_t i = 0; i < out.transitions.size(); ++i)
    out.transitions[i].reward += sigma * logits[i];
  return out;
}

namespace {

Dataset subsample_uniform(const Dataset& d, double ratio, Rng& rng) {
  if (ratio >= 1.0) return d;
  const std::size_t n = d.transitions.size();
  std::size_t keep = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (keep == 0) keep = 1;
  // Partial Fisher-Yates over an index vector; the kept subset stays in
  // original order so episode structure reads naturally.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  Dataset out = d;
  out.transitions.clear();
  for (std::size_t i : idx) out.transitions.push_back(d.transitions[i]);
  return out;
}

struct SeedData {
  Dataset d_src;
  Dataset d_tar;
  // Evaluation targets; exactly one pair is populated per family.
  TabularMDP tar_mdp;
  ContinuousEnv tar_env;
  bool tabular = true;
};

SeedData generate_seed_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData out;
  Rng rng(seed ^ 0xda7a5e1ec7ULL);
  if (cfg.family == EnvFamily::pointmass) {
    out.tabular = false;
    auto [src_env, tar_env] = make_pointmass_pair(cfg.pointmass);
    out.tar_env = tar_env;
    const PdController pd = make_pd_controller(cfg.pointmass, cfg.data.quality);
    out.d_src = sample_continuous_dataset(src_env, pd, cfg.data.n_source, seed * 2 + 1,
                                          Domain::source);
    Dataset full_tar = sample_continuous_dataset(tar_env, pd, cfg.data.n_target, seed * 2 + 2,
                                                 Domain::target);
    out.d_tar = subsample_uniform(full_tar, cfg.data.target_ratio, rng);
  } else {
    auto pair = cfg.family == EnvFamily::gridworld
                    ? make_gridworld_pair(cfg.gridworld)
                    : make_gridworld_broken_pair(cfg.gridworld, cfg.broken_action);
    out.tar_mdp = pair.second;
    const TabularPolicy b_src = make_behavior_policy(pair.first, cfg.data.quality, seed);
    const TabularPolicy b_tar = make_behavior_policy(pair.second, cfg.data.quality, seed);
    out.d_src = sample_dataset(pair.first, b_src, cfg.data.n_source, cfg.data.horizon,
                               seed * 2 + 1, Domain::source, "gridworld");
    Dataset full_tar = sample_dataset(pair.second, b_tar, cfg.data.n_target, cfg.data.horizon,
                                      seed * 2 + 2, Domain::target, "gridworld");
    out.d_tar = subsample_uniform(full_tar, cfg.data.target_ratio, rng);
  }
  if (cfg.mode == Mode::target_only) out.d_src.transitions.clear();
  return out;
}

}  // namespace

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                    std::vector<RlMetricsRow>* metrics) {
  SeedResult res;
  res.seed = seed;
  try {
    cfg.validate();
    SeedData data = generate_seed_data(cfg, seed);
    IqlConfig iql = cfg.iql;
    iql.seed = seed;

    IqlNets nets;
    switch (cfg.mode) {
      case Mode::igdf: {
        ContrastiveConfig ccfg = cfg.contrastive;
        ccfg.seed = seed;
        const Encoder enc = train_encoder(ccfg, data.d_src, data.d_tar);
        nets = train_igdf_iql(iql, cfg.filter, &enc, data.d_src, data.d_tar, metrics);
        break;
      }
      case Mode::naive_merge:
      case Mode::target_only:
        nets = train_naive_iql(iql, data.d_src, data.d_tar, metrics);
        break;
      case Mode::dara_reward: {
        DaraConfig dcfg;
        dcfg.seed = seed;
        dcfg.update_count = cfg.contrastive.update_count;
        dcfg.hidden = cfg.contrastive.hidden;
        const DaraModel dara = dara_baseline_train(dcfg, data.d_src, data.d_tar);
        Dataset shifted = data.d_src;
        for (auto& t : shifted.transitions) t.reward += dara.delta_r(t);
        nets = train_naive_iql(iql, shifted, data.d_tar, metrics);
        break;
      }
      case Mode::reward_mod_variant: {
        ContrastiveConfig ccfg = cfg.contrastive;
        ccfg.seed = seed;
        const Encoder enc = train_encoder(ccfg, data.d_src, data.d_tar);
        const Dataset shifted = reward_mod_variant(enc, data.d_src, cfg.sigma);
        nets = train_naive_iql(iql, shifted, data.d_tar, metrics);
        break;
      }
    }
    const EvalResult eval =
        data.tabular
            ? evaluate_policy(data.tar_mdp, nets, cfg.eval_episodes, cfg.data.horizon, seed ^ 0xe7a1ULL)
            : evaluate_policy(data.tar_env, nets, cfg.eval_episodes, seed ^ 0xe7a1ULL);
    res.return_mean = eval.mean;
    res.return_std = eval.std_dev;
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
  }
  return res;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_metrics_csv(const std::string& path, const std::vector<RlMetricsRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "step,phase,v_loss,q_loss,pi_loss,eval_return_mean,eval_return_std\n";
  for (const auto& r : rows) {
    f << r.step << "," << r.phase << "," << fmt(r.v_loss) << "," << fmt(r.q_loss) << ","
      << fmt(r.pi_loss) << ",";
    if (r.has_eval) f << fmt(r.eval_return_mean) << "," << fmt(r.eval_return_std);
    else f << ",";
    f << "\n";
  }
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(cfg.out_dir + "/manifest.json");
    if (!f) throw std::runtime_error("cannot open manifest in " + cfg.out_dir);
    f << experiment_config_to_json(cfg);
  }

  ExperimentSummary summary;
  for (int i = 0; i < cfg.n_seeds; ++i) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
    std::vector<RlMetricsRow> metrics;
    SeedResult res = run_seed(cfg, seed, &metrics);
    const std::string seed_dir = cfg.out_dir + "/seed_" + std::to_string(seed);
    fs::create_directories(seed_dir);
    write_metrics_csv(seed_dir + "/metrics.csv", metrics);
    if (!res.ok) {
      std::ofstream f(seed_dir + "/error.txt");
      f << res.error << "\n";
    }
    summary.seeds.push_back(std::move(res));
  }

  double sum = 0.0;
  int n_ok = 0;
  for (const auto& s : summary.seeds)
    if (s.ok) { sum += s.return_mean; ++n_ok; }
  if (n_ok > 0) {
    summary.mean = sum / n_ok;
    double sq = 0.0;
    for (const auto& s : summary.seeds)
      if (s.ok) sq += (s.return_mean - summary.mean) * (s.return_mean - summary.mean);
    summary.std_dev = std::sqrt(sq / n_ok);
  }

  std::ofstream f(cfg.out_dir + "/summary.csv");
  if (!f) throw std::runtime_error("cannot open summary in " + cfg.out_dir);
  f << "row,seed,return_mean,return_std,ok,error\n";
  for (const auto& s : summary.seeds)
    f << "seed," << s.seed << "," << fmt(s.return_mean) << "," << fmt(s.return_std) << ","
      << (s.ok ? 1 : 0) << "," << s.error << "\n";
  f << "aggregate,," << fmt(summary.mean) << "," << fmt(summary.std_dev) << "," << n_ok << ",\n";
  return summary;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const std::string& parameter,
                                      const std::vector<std::string>& values) {
  if (values.empty()) throw std::invalid_argument("run_ablation: empty value list");
  json base_json = json::parse(experiment_config_to_json(base));

  // Dotted path into the config object.
  std::vector<std::string> path;
  {
    std::stringstream ss(parameter);
    std::string tok;
    while (std::getline(ss, tok, '.')) path.push_back(tok);
  }
  {
    const json* node = &base_json;
    for (const auto& key : path) {
      if (!node->is_object() || !node->contains(key))
        throw std::invalid_argument("run_ablation: unknown parameter " + parameter);
      node = &node->at(key);
    }
  }

  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    json j = base_json;
    json* node = &j;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &node->at(path[i]);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // bare string value
    }
    (*node)[path.back()] = parsed;
    j["out_dir"] = base.out_dir + "/" + path.back() + "_" + value;
    ExperimentConfig cfg = parse_experiment_config(j.dump());
    ExperimentSummary summary = run_experiment(cfg);
    for (const auto& s : summary.seeds)
      rows.push_back({value, s.seed, s.return_mean, s.return_std, s.ok});
  }

  std::ofstream f(base.out_dir + "/ablation_" + path.back() + ".csv");
  if (f) {
    f << "value,seed,return_mean,return_std,ok\n";
    for (const auto& r : rows)
      f << r.value << "," << r.seed << "," << fmt(r.return_mean) << "," << fmt(r.return_std)
        << "," << (r.ok ? 1 : 0) << "\n";
  }
  return rows;
}

}  // namespace igdf
